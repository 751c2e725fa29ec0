#include "octa/metrics.hpp"

namespace octa {

ConfusionCounts confusion(const BinaryMask& pred, const BinaryMask& gt) {
    if (pred.width() != gt.width() || pred.height() != gt.height())
        throw ArgumentError("confusion: dimension mismatch");
    if (!(pred.roi() == gt.roi()))
        throw ArgumentError("confusion: ROI mismatch");
    ConfusionCounts c;
    for (int y = 0; y < pred.height(); ++y) {
        for (int x = 0; x < pred.width(); ++x) {
            if (!pred.roi().at(x, y))
                continue;
            const bool p = pred.vessel_at(x, y);
            const bool g = gt.vessel_at(x, y);
            if (p && g)
                ++c.tp;
            else if (p && !g)
                ++c.fp;
            else if (!p && g)
                ++c.fn;
            else
                ++c.tn;
        }
    }
    return c;
}

Rates rates(const ConfusionCounts& c) {
    if (c.total() == 0)
        throw ArgumentError("rates: empty confusion counts");
    if (c.tp + c.fn == 0)
        throw UndefinedRateError("rates: sensitivity undefined (TP+FN = 0)");
    if (c.tn + c.fp == 0)
        throw UndefinedRateError("rates: specificity undefined (TN+FP = 0)");
    Rates r;
    r.accuracy = static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
    r.sensitivity = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
    r.specificity = static_cast<double>(c.tn) / static_cast<double>(c.tn + c.fp);
    return r;
}

double dice(const ConfusionCounts& c) {
    const std::int64_t denom = 2 * c.tp + c.fp + c.fn;
    if (denom == 0)
        throw UndefinedRateError("dice: undefined (no vessel pixels on either side)");
    return 2.0 * static_cast<double>(c.tp) / static_cast<double>(denom);
}

GroupRates dataset_rates(const std::vector<std::pair<BinaryMask, BinaryMask>>& pairs,
                         const std::vector<std::string>& labels) {
    if (pairs.empty() || pairs.size() != labels.size())
        throw ArgumentError("dataset_rates: pairs and labels must be non-empty and aligned");

    std::map<std::string, std::vector<Rates>> per_group;
    std::map<std::string, ConfusionCounts> pooled;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const ConfusionCounts c = confusion(pairs[i].first, pairs[i].second);
        per_group[labels[i]].push_back(rates(c));
        ConfusionCounts& acc = pooled[labels[i]];
        acc.tp += c.tp;
        acc.fp += c.fp;
        acc.tn += c.tn;
        acc.fn += c.fn;
    }

    GroupRates out;
    for (const auto& [group, rs] : per_group) {
        Rates mean;
        for (const Rates& r : rs) {
            mean.accuracy += r.accuracy;
            mean.sensitivity += r.sensitivity;
            mean.specificity += r.specificity;
        }
        const double n = static_cast<double>(rs.size());
        mean.accuracy /= n;
        mean.sensitivity /= n;
        mean.specificity /= n;
        out.mean_per_group[group] = mean;
        out.pooled_per_group[group] = rates(pooled[group]);
    }
    return out;
}

} // namespace octa
