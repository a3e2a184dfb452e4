#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vcnn/error.hpp"

namespace vcnn {

/// Rows are the real class, columns the predicted class.
struct ConfusionMatrix {
    std::size_t classes = 3;
    std::vector<std::size_t> counts;

    explicit ConfusionMatrix(std::size_t n = 3) : classes(n), counts(n * n, 0) {}

    ConfusionMatrix(std::initializer_list<std::initializer_list<std::size_t>> rows) : ConfusionMatrix(rows.size()) {
        std::size_t r = 0;
        for (const auto& row : rows) {
            if (row.size() != classes) throw InputError("confusion matrix must be square");
            std::size_t c = 0;
            for (auto v : row) at(r, c++) = v;
            ++r;
        }
    }

    std::size_t& at(std::size_t real, std::size_t pred) { return counts[real * classes + pred]; }
    std::size_t at(std::size_t real, std::size_t pred) const { return counts[real * classes + pred]; }

    std::size_t total() const {
        std::size_t t = 0;
        for (auto v : counts) t += v;
        return t;
    }
    std::size_t trace() const {
        std::size_t t = 0;
        for (std::size_t i = 0; i < classes; ++i) t += at(i, i);
        return t;
    }
    std::size_t row_sum(std::size_t r) const {
        std::size_t t = 0;
        for (std::size_t c = 0; c < classes; ++c) t += at(r, c);
        return t;
    }
    std::size_t col_sum(std::size_t c) const {
        std::size_t t = 0;
        for (std::size_t r = 0; r < classes; ++r) t += at(r, c);
        return t;
    }

    friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

inline ConfusionMatrix confusion_matrix(const std::vector<std::size_t>& y_true, const std::vector<std::size_t>& y_pred,
                                        std::size_t classes = 3) {
    if (y_true.size() != y_pred.size()) throw InputError("label and prediction counts differ");
    ConfusionMatrix cm(classes);
    for (std::size_t i = 0; i < y_true.size(); ++i) {
        if (y_true[i] >= classes || y_pred[i] >= classes) throw InputError("unknown label in confusion matrix input");
        ++cm.at(y_true[i], y_pred[i]);
    }
    return cm;
}

inline double accuracy(const ConfusionMatrix& cm) {
    if (cm.total() == 0) throw InputError("accuracy of an empty confusion matrix");
    return double(cm.trace()) / double(cm.total());
}

struct SensSpec {
    double sensitivity = 0.0;
    double specificity = 0.0;
};

/// Collapses to positive-vs-rest: VP/(VP+FN) and VN/(VN+FP). Class 1 is AD.
inline SensSpec sensitivity_specificity(const ConfusionMatrix& cm, std::size_t positive = 1) {
    if (positive >= cm.classes) throw InputError("positive class out of range");
    const double vp = double(cm.at(positive, positive));
    const double fn = double(cm.row_sum(positive)) - vp;
    const double fp = double(cm.col_sum(positive)) - vp;
    const double vn = double(cm.total()) - vp - fn - fp;
    if (vp + fn == 0) throw InputError("positive class has no samples");
    SensSpec s;
    s.sensitivity = vp / (vp + fn);
    s.specificity = vn + fp > 0 ? vn / (vn + fp) : 1.0;
    return s;
}

inline nlohmann::json to_json(const ConfusionMatrix& cm) {
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t r = 0; r < cm.classes; ++r) {
        nlohmann::json row = nlohmann::json::array();
        for (std::size_t c = 0; c < cm.classes; ++c) row.push_back(cm.at(r, c));
        rows.push_back(row);
    }
    return rows;
}

inline nlohmann::json metrics_json(const ConfusionMatrix& cm, std::size_t positive = 1) {
    const auto ss = sensitivity_specificity(cm, positive);
    return {{"confusion_matrix", to_json(cm)},
            {"accuracy", accuracy(cm)},
            {"sensitivity", ss.sensitivity},
            {"specificity", ss.specificity},
            {"samples", cm.total()}};
}

}  // namespace vcnn
