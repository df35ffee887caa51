#pragma once

#include "stereopatch/matchers.hpp"

namespace stereopatch {

// Plain scalar-loop implementations of the parallel kernels. They exist to
// cross-check the OpenMP versions and to serve as a timing baseline; keep them
// boring and obviously correct.
namespace serial {

FeatureMap census_features(const Image& img, int window);
CostVolume build_cost_volume(const FeatureMap& left, const FeatureMap& right, int d_max);
CostVolume sgm_aggregate(const CostVolume& v, double p1, double p2, int paths);
CostVolume box_aggregate(const CostVolume& v, int radius);
DisparityMap disparity_wta(const CostVolume& v);
double d1_all(const DisparityMap& pred, const DisparityMap& gt, const Region& region);

}  // namespace serial

}  // namespace stereopatch
