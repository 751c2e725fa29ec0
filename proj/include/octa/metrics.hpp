#ifndef OCTA_METRICS_HPP
#define OCTA_METRICS_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "octa/raster.hpp"

namespace octa {

struct ConfusionCounts {
    std::int64_t tp = 0, fp = 0, tn = 0, fn = 0;
    std::int64_t total() const { return tp + fp + tn + fn; }
};

struct Rates {
    double accuracy = 0.0;
    double sensitivity = 0.0;
    double specificity = 0.0;
};

// Pixel-wise comparison over the shared ROI.
ConfusionCounts confusion(const BinaryMask& pred, const BinaryMask& gt);

// accuracy (TP+TN)/total, sensitivity TP/(TP+FN), specificity TN/(TN+FP).
Rates rates(const ConfusionCounts& c);

// Extra overlap metric, not part of the agreement workflow.
double dice(const ConfusionCounts& c);

struct GroupRates {
    std::map<std::string, Rates> mean_per_group;   // unweighted per-image mean
    std::map<std::string, Rates> pooled_per_group; // pooled-pixel alternative
};

// Per-group agreement: pairs[i] compared and attributed to labels[i].
GroupRates dataset_rates(const std::vector<std::pair<BinaryMask, BinaryMask>>& pairs,
                         const std::vector<std::string>& labels);

} // namespace octa

#endif
