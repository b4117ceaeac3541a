"""On-line object detector training with human-in-the-loop refinement.

The package simulates a teacher-learner perception loop: a synthetic world
stands in for the robot's cameras, depth segmentation provides free labels
for an initial supervised phase, and a refinement phase mixes active-learning
queries, tracker-propagated annotations and self-supervised pseudo labels to
adapt the detector to a shifted scene with minimal human effort.
"""

__version__ = "0.1.0"
