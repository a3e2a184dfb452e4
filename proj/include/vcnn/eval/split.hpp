#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <vector>

#include "vcnn/error.hpp"
#include "vcnn/rng.hpp"

namespace vcnn {

namespace detail {

inline std::vector<std::vector<std::size_t>> indices_by_class(const std::vector<std::size_t>& labels,
                                                              std::size_t classes) {
    std::vector<std::vector<std::size_t>> by(classes);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] >= classes) throw InputError("label " + std::to_string(labels[i]) + " out of range");
        by[labels[i]].push_back(i);
    }
    return by;
}

inline std::size_t class_count_of(const std::vector<std::size_t>& labels) {
    std::size_t m = 0;
    for (auto l : labels) m = std::max(m, l + 1);
    return m;
}

}  // namespace detail

/// Largest-remainder apportionment of round(frac * N) items across classes.
inline std::vector<std::size_t> apportion(const std::vector<std::size_t>& counts, double frac) {
    std::size_t n = 0;
    for (auto c : counts) n += c;
    const auto target = static_cast<std::size_t>(std::llround(frac * double(n)));
    std::vector<std::size_t> out(counts.size());
    std::vector<std::pair<double, std::size_t>> rem;
    std::size_t assigned = 0;
    for (std::size_t c = 0; c < counts.size(); ++c) {
        const double q = frac * double(counts[c]);
        out[c] = static_cast<std::size_t>(std::floor(q + 1e-9));
        assigned += out[c];
        rem.emplace_back(q - double(out[c]), c);
    }
    std::stable_sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t i = 0; assigned < target && i < rem.size(); ++i) {
        if (out[rem[i].second] < counts[rem[i].second]) {
            ++out[rem[i].second];
            ++assigned;
        }
    }
    return out;
}

struct SplitIndices {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

/// Class-proportional hold-out split; both index lists come back sorted.
inline SplitIndices stratified_split(const std::vector<std::size_t>& labels, double test_frac, std::uint64_t seed) {
    if (!(test_frac > 0.0 && test_frac < 1.0)) throw InputError("test fraction must lie in (0, 1)");
    if (labels.empty()) throw InputError("cannot split an empty label list");
    auto by = detail::indices_by_class(labels, detail::class_count_of(labels));
    std::vector<std::size_t> counts;
    for (const auto& v : by) counts.push_back(v.size());
    const auto take = apportion(counts, test_frac);
    SplitIndices out;
    for (std::size_t c = 0; c < by.size(); ++c) {
        Rng rng = Rng::substream(seed, "split", c);
        rng.shuffle(std::span<std::size_t>(by[c]));
        out.test.insert(out.test.end(), by[c].begin(), by[c].begin() + static_cast<std::ptrdiff_t>(take[c]));
        out.train.insert(out.train.end(), by[c].begin() + static_cast<std::ptrdiff_t>(take[c]), by[c].end());
    }
    std::sort(out.train.begin(), out.train.end());
    std::sort(out.test.begin(), out.test.end());
    return out;
}

struct FoldPlan {
    std::size_t reps = 0;
    std::size_t k = 0;
    std::size_t n = 0;
    std::vector<std::vector<std::vector<std::size_t>>> validation;  // [rep][fold] sorted indices

    std::size_t runs() const noexcept { return reps * k; }

    const std::vector<std::size_t>& val(std::size_t rep, std::size_t fold) const { return validation.at(rep).at(fold); }

    std::vector<std::size_t> train(std::size_t rep, std::size_t fold) const {
        const auto& v = val(rep, fold);
        std::vector<std::size_t> out;
        std::size_t j = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (j < v.size() && v[j] == i) {
                ++j;
            } else {
                out.push_back(i);
            }
        }
        return out;
    }
};

/// Each repetition shuffles every class afresh and deals its members to the
/// folds round-robin, continuing the rotation from where the previous class
/// stopped so fold sizes stay balanced overall.
inline FoldPlan repeated_stratified_kfold(const std::vector<std::size_t>& labels, std::size_t k, std::size_t reps,
                                          std::uint64_t seed) {
    if (k < 2 && labels.size() > 1) throw InputError("k must be >= 2");
    if (k < 1) throw InputError("k must be >= 1");
    if (reps < 1) throw InputError("repetitions must be >= 1");
    auto by = detail::indices_by_class(labels, detail::class_count_of(labels));
    std::size_t smallest = labels.size();
    for (const auto& v : by) {
        if (!v.empty()) smallest = std::min(smallest, v.size());
    }
    if (k > smallest) {
        throw InputError("k = " + std::to_string(k) + " exceeds the smallest class count " + std::to_string(smallest));
    }
    FoldPlan plan;
    plan.reps = reps;
    plan.k = k;
    plan.n = labels.size();
    for (std::size_t r = 0; r < reps; ++r) {
        std::vector<std::vector<std::size_t>> folds(k);
        std::size_t offset = 0;
        for (std::size_t c = 0; c < by.size(); ++c) {
            auto members = by[c];
            Rng rng = Rng::substream(seed, "folds", r, c);
            rng.shuffle(std::span<std::size_t>(members));
            for (std::size_t j = 0; j < members.size(); ++j) folds[(offset + j) % k].push_back(members[j]);
            offset = (offset + members.size()) % k;
        }
        for (auto& f : folds) std::sort(f.begin(), f.end());
        plan.validation.push_back(std::move(folds));
    }
    return plan;
}

/// Throws when any index is in both sets.
inline void assert_disjoint(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
    std::set<std::size_t> s(a.begin(), a.end());
    for (auto i : b) {
        if (s.count(i)) throw Error("index " + std::to_string(i) + " appears in both train and validation sets");
    }
}

}  // namespace vcnn
