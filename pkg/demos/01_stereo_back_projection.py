"""
Stereo back-projection
======================

Turn a disparity map into a point cloud with the 4x4 reprojection matrix,
then clean the depth with a median filter.
"""

import numpy as np

from radsearch.geo import GeoTransform, Raster
from radsearch.stereo import StereoCalibration, back_project, build_q, disparity_to_cloud, median_filter_depth, project

calib = StereoCalibration(f=1200.0, cx=640.0, cy=480.0, cx_r=652.0, baseline_b=1.38)
q = build_q(calib)
print(q)

# a point 30 m below the rig, round-tripped through the pinhole model
x, y, d = project(calib, 2.0, -1.5, 30.0)
print("pixel", x, y, "disparity", d)
print("back-projected", back_project(q, x, y, d))

# a small synthetic disparity map of flat ground with one spike
h, w = 40, 60
Z = np.full((h, w), 30.0)
disp = (calib.cx - calib.cx_r) - calib.f * calib.baseline_b / Z
disp[20, 30] += 25.0
cloud = disparity_to_cloud(Raster(disp, GeoTransform(), None, "real"), calib)
print(len(cloud), "points, depth range", cloud.points[:, 2].min(), cloud.points[:, 2].max())

depth = Raster(np.where(np.isfinite(Z), Z, np.nan), GeoTransform(), np.nan, "elevation")
noisy = np.array(depth.data)
noisy[5, 5] = 90.0
clean = median_filter_depth(Raster(noisy, GeoTransform(), np.nan, "elevation"), 3)
print("outlier before", noisy[5, 5], "after", clean.data[5, 5])
