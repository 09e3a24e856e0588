"""
Owner and device perspectives
=============================

Relationship strength, face-to-face likelihood and shared friends between a
provider and a consumer, followed by a popularity-weighted device reputation.
"""

import numpy as np

from iottrust.device import DeviceDescriptor, DeviceProperty, device_reputation_uniform, device_reputation_weighted
from iottrust.owner import (
    Locality,
    OwnerConfig,
    SocialProfile,
    common_friends_factor,
    common_friends_factor_localized,
    face_to_face,
    normalize_coordinates,
    relationship_factor_localized,
)

# raw longitude/latitude of four users, squeezed into [0.01, 1]
lon = np.array([151.21, 151.18, 151.25, 150.90])
lat = np.array([-33.87, -33.89, -33.80, -33.95])
xs, ys = normalize_coordinates(lon, lat)
locs = {u: Locality(float(x), float(y)) for u, x, y in zip("pcfg", xs, ys)}

# K = 3 relation types: colleague, friend, family
provider = SocialProfile("p", {"c": 2, "f": 3, "g": 1}, locs["p"])
consumer = SocialProfile("c", {"p": 2, "f": 2}, locs["c"])
cfg = OwnerConfig(K=3, mu1=0.5, mu2=0.5)

print("face to face:        ", round(face_to_face(locs["p"], locs["c"]), 4))
print("relationship:        ", round(relationship_factor_localized(2, 3, locs["p"], locs["c"]), 4))
print("common friends:      ", round(common_friends_factor(provider, consumer, cfg), 4))
print("  damped by locality:", round(common_friends_factor_localized(provider, consumer, cfg, locs), 4))

# a well-reviewed phone running an unpopular, poorly rated OS build
phone = DeviceDescriptor("phone", (
    DeviceProperty("manufacturer", 0.9, 12_000),
    DeviceProperty("model", 0.7, 800),
    DeviceProperty("operating_system", 0.3, 40),
))
print("device reputation, plain mean:", round(device_reputation_uniform(phone), 4))
print("device reputation, weighted:  ", round(device_reputation_weighted(phone), 4))
