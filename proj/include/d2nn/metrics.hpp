#pragma once

#include <span>
#include <string_view>
#include <optional>

namespace d2nn {

/// Binary confusion counts. A missing prediction (-1) counts as wrong: a
/// false negative on a positive example, a false positive otherwise.
struct Confusion {
    long tp = 0, fp = 0, fn = 0, tn = 0;

    long total() const { return tp + fp + fn + tn; }
    Confusion& operator+=(const Confusion& o);
};

Confusion confusion(std::span<const int> predicted, std::span<const int> truth, int positive = 1);

/// No predicted positives: 1 when there are no actual positives either, else 0.
double precision(const Confusion& c);
/// No actual positives: 1 when nothing was predicted positive, else 0.
double recall(const Confusion& c);
/// Harmonic mean of precision and recall; 1 for an all-negative set predicted
/// all negative, 0 when positives exist but none were predicted.
double f1(const Confusion& c);

/// Fraction of exact matches; missing predictions are wrong.
double accuracy(std::span<const int> predicted, std::span<const int> truth);

enum class Metric { accuracy, f1, precision };
std::string_view metric_name(Metric m);
std::optional<Metric> parse_metric(std::string_view name);

/// Set-level metric over one group of examples. Throws Error on an empty or
/// mismatched set.
double evaluate_metric(Metric m, std::span<const int> predicted, std::span<const int> truth, int positive = 1);

}  // namespace d2nn
