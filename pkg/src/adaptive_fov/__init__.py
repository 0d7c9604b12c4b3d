"""Adaptive constrained kinematic control for a robot-held camera.

Modules:

``dq``           quaternion / dual-quaternion algebra
``kinematics``   parameterized serial chains and their Jacobians
``camera``       pinhole measurement model
``sightline``    line-of-sight Jacobians
``constraints``  vector-field-inequality rows
``qp``           dense active-set QP solver
``controller``   task-space control QP
``estimator``    parameter adaptation QP
``scenario``     closed-loop simulation, traces and summaries
``checks``       finite-difference Jacobian validation
"""

__version__ = "0.1.0"
