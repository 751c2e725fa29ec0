#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "octa/metrics.hpp"
#include "octa/rng.hpp"

using namespace octa;

namespace {

BinaryMask mask_of(int w, int h, const std::vector<std::uint8_t>& vessel) {
    return BinaryMask(w, h, vessel, RoiMask::full(w, h));
}

BinaryMask random_mask(int w, int h, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<std::uint8_t> v(static_cast<std::size_t>(w) * h);
    for (auto& b : v)
        b = rng.next_below(2) ? 1 : 0;
    return mask_of(w, h, v);
}

} // namespace

TEST_CASE("confusion on identical and inverted masks") {
    const BinaryMask a = random_mask(8, 8, 1);
    std::vector<std::uint8_t> inverted(a.vessel().size());
    for (std::size_t i = 0; i < inverted.size(); ++i)
        inverted[i] = a.vessel()[i] ? 0 : 1;
    const BinaryMask na = mask_of(8, 8, inverted);

    const ConfusionCounts same = confusion(a, a);
    CHECK(same.fp == 0);
    CHECK(same.fn == 0);
    CHECK(same.total() == 64);

    const ConfusionCounts flip = confusion(na, a);
    CHECK(flip.tp == 0);
    CHECK(flip.tn == 0);
}

TEST_CASE("confusion on the enumerated 2x2 case") {
    // gt vessel {(0,0),(0,1)}, pred vessel {(0,0),(1,0)}
    const BinaryMask gt = mask_of(2, 2, {1, 0, 1, 0});
    const BinaryMask pred = mask_of(2, 2, {1, 1, 0, 0});
    const ConfusionCounts c = confusion(pred, gt);
    CHECK(c.tp == 1);
    CHECK(c.fn == 1);
    CHECK(c.fp == 1);
    CHECK(c.tn == 1);
}

TEST_CASE("swapping pred and gt swaps FP and FN only") {
    const BinaryMask a = random_mask(9, 7, 2);
    const BinaryMask b = random_mask(9, 7, 3);
    const ConfusionCounts ab = confusion(a, b);
    const ConfusionCounts ba = confusion(b, a);
    CHECK(ab.tp == ba.tp);
    CHECK(ab.tn == ba.tn);
    CHECK(ab.fp == ba.fn);
    CHECK(ab.fn == ba.fp);
    CHECK(rates(ab).accuracy == rates(ba).accuracy);
}

TEST_CASE("confusion requires matching dimensions and ROI") {
    const BinaryMask a = random_mask(4, 4, 4);
    const BinaryMask b = random_mask(5, 4, 5);
    CHECK_THROWS_AS(confusion(a, b), ArgumentError);

    std::vector<std::uint8_t> included(16, 1);
    included[3] = 0;
    const BinaryMask c(4, 4, a.vessel(), RoiMask(4, 4, included));
    CHECK_THROWS_AS(confusion(a, c), ArgumentError);
}

TEST_CASE("rates anchors and undefined cases") {
    const Rates perfect = rates({50, 0, 50, 0});
    CHECK(perfect.accuracy == 1.0);
    CHECK(perfect.sensitivity == 1.0);
    CHECK(perfect.specificity == 1.0);

    const Rates half = rates({1, 1, 1, 1});
    CHECK(half.accuracy == 0.5);
    CHECK(half.sensitivity == 0.5);
    CHECK(half.specificity == 0.5);

    CHECK_THROWS_AS(rates({0, 1, 1, 0}), UndefinedRateError); // TP+FN = 0
    CHECK_THROWS_AS(rates({1, 0, 0, 1}), UndefinedRateError); // TN+FP = 0
}

TEST_CASE("accuracy decomposes into class-weighted sensitivity and specificity") {
    Rng rng(6);
    for (int i = 0; i < 40; ++i) {
        ConfusionCounts c{static_cast<std::int64_t>(1 + rng.next_below(100)),
                          static_cast<std::int64_t>(1 + rng.next_below(100)),
                          static_cast<std::int64_t>(1 + rng.next_below(100)),
                          static_cast<std::int64_t>(1 + rng.next_below(100))};
        const Rates r = rates(c);
        const double recomposed = (r.sensitivity * static_cast<double>(c.tp + c.fn) +
                                   r.specificity * static_cast<double>(c.tn + c.fp)) /
                                  static_cast<double>(c.total());
        CHECK(recomposed == doctest::Approx(r.accuracy).epsilon(1e-12));
    }
}

TEST_CASE("dice extra metric") {
    CHECK(dice({10, 0, 5, 0}) == 1.0);
    CHECK(dice({0, 3, 5, 3}) == 0.0);
    CHECK_THROWS_AS(dice({0, 0, 5, 0}), UndefinedRateError);
}

TEST_CASE("dataset_rates on single-image groups returns the image rates") {
    const BinaryMask pred = random_mask(10, 10, 7);
    const BinaryMask gt = random_mask(10, 10, 8);
    const GroupRates g = dataset_rates({{pred, gt}}, {"healthy"});
    const Rates want = rates(confusion(pred, gt));
    CHECK(g.mean_per_group.at("healthy").accuracy == want.accuracy);
    CHECK(g.pooled_per_group.at("healthy").accuracy == want.accuracy);
}

TEST_CASE("duplicating an image leaves the group mean unchanged") {
    const BinaryMask pred = random_mask(10, 10, 9);
    const BinaryMask gt = random_mask(10, 10, 10);
    const GroupRates once = dataset_rates({{pred, gt}}, {"g"});
    const GroupRates twice = dataset_rates({{pred, gt}, {pred, gt}}, {"g", "g"});
    CHECK(once.mean_per_group.at("g").accuracy ==
          doctest::Approx(twice.mean_per_group.at("g").accuracy).epsilon(1e-15));
    CHECK(once.mean_per_group.at("g").sensitivity ==
          doctest::Approx(twice.mean_per_group.at("g").sensitivity).epsilon(1e-15));
}

TEST_CASE("dataset_rates validates its inputs") {
    CHECK_THROWS_AS(dataset_rates({}, {}), ArgumentError);
    const BinaryMask m = random_mask(4, 4, 11);
    CHECK_THROWS_AS(dataset_rates({{m, m}}, {"a", "b"}), ArgumentError);
}
