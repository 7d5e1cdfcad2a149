"""
Triplet losses on the unit sphere
=================================

A quick tour of the distance and the hinge losses with hand-placed points.
"""

import numpy as np

from xmodal import cosine_distance, l2_normalize
from xmodal.losses import instance_triplet_loss, pairwise_pwpp_loss

# Points at known angles from a query on the circle
def at_angle(deg):
    t = np.radians(deg)
    return np.array([np.cos(t), np.sin(t)])

q = at_angle(0)
for deg in (0, 30, 60, 90, 180):
    print(f"{deg:3d} deg  distance {cosine_distance(q, at_angle(deg)):.4f}")

# l2_normalize keeps the direction only
print(l2_normalize(np.array([3.0, 4.0])))

# A triplet stops contributing once the negative is a margin further away than the positive
alpha = 0.3
p = at_angle(20)
for deg in (25, 45, 60, 90):
    loss, *_ = instance_triplet_loss(q, p, at_angle(deg), alpha)
    print(f"negative at {deg:2d} deg  loss {loss:.4f}")

# The pairwise loss pulls matches below 0.3 and pushes non-matches past 0.9
for deg, y in ((10, 1), (60, 1), (60, 0), (120, 0)):
    loss, *_ = pairwise_pwpp_loss(q, at_angle(deg), y, 0.3, 0.9)
    print(f"pair at {deg:3d} deg  match={y}  loss {loss:.4f}")
