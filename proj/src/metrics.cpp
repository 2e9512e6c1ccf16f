#include "d2nn/metrics.hpp"

#include "d2nn/error.hpp"

namespace d2nn {

namespace {

void check_sizes(std::span<const int> predicted, std::span<const int> truth) {
    if (predicted.size() != truth.size())
        throw Error("metric: " + std::to_string(predicted.size()) + " predictions for " +
                    std::to_string(truth.size()) + " labels");
    if (predicted.empty()) throw Error("metric: empty example set");
}

}  // namespace

Confusion& Confusion::operator+=(const Confusion& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    tn += o.tn;
    return *this;
}

Confusion confusion(std::span<const int> predicted, std::span<const int> truth, int positive) {
    check_sizes(predicted, truth);
    Confusion c;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        const bool actual = truth[i] == positive;
        if (predicted[i] < 0) {
            ++(actual ? c.fn : c.fp);
            continue;
        }
        const bool said = predicted[i] == positive;
        if (said && actual) ++c.tp;
        else if (said) ++c.fp;
        else if (actual) ++c.fn;
        else ++c.tn;
    }
    return c;
}

double precision(const Confusion& c) {
    if (c.tp + c.fp == 0) return c.fn == 0 ? 1.0 : 0.0;
    return static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
}

double recall(const Confusion& c) {
    if (c.tp + c.fn == 0) return c.fp == 0 ? 1.0 : 0.0;
    return static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
}

double f1(const Confusion& c) {
    if (c.tp + c.fp == 0) return c.fn == 0 ? 1.0 : 0.0;
    const double p = precision(c), r = recall(c);
    return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
}

double accuracy(std::span<const int> predicted, std::span<const int> truth) {
    check_sizes(predicted, truth);
    long right = 0;
    for (std::size_t i = 0; i < predicted.size(); ++i) right += predicted[i] >= 0 && predicted[i] == truth[i];
    return static_cast<double>(right) / static_cast<double>(predicted.size());
}

std::string_view metric_name(Metric m) {
    switch (m) {
    case Metric::accuracy: return "accuracy";
    case Metric::f1: return "f1";
    case Metric::precision: return "precision";
    }
    return "?";
}

std::optional<Metric> parse_metric(std::string_view name) {
    if (name == "accuracy") return Metric::accuracy;
    if (name == "f1") return Metric::f1;
    if (name == "precision") return Metric::precision;
    return std::nullopt;
}

double evaluate_metric(Metric m, std::span<const int> predicted, std::span<const int> truth, int positive) {
    switch (m) {
    case Metric::accuracy: return accuracy(predicted, truth);
    case Metric::f1: return f1(confusion(predicted, truth, positive));
    case Metric::precision: return precision(confusion(predicted, truth, positive));
    }
    return 0.0;
}

}  // namespace d2nn
