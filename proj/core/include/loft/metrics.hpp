#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace loft {

// ASCII case-fold, collapse whitespace runs to single spaces, trim ends.
std::string normalize_text(const std::string& s);

// Containment accuracy: an example counts as correct when the normalized
// gold answer appears as a substring of the normalized prediction.
double accuracy(const std::vector<std::string>& preds,
                const std::vector<std::string>& golds);

// First class (in the given order) whose normalized name is contained in
// the normalized prediction; empty string when none match.
std::string map_to_class(const std::string& pred,
                         const std::vector<std::string>& classes);

struct ClassStats {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    int64_t support = 0;
};

struct EvalResult {
    double accuracy = 0.0;
    std::optional<double> weighted_f1;
    std::map<std::string, ClassStats> per_class;
    int64_t n = 0;
};

// Support-weighted mean of per-class F1; F1 is 0 where precision + recall
// is 0. Golds outside the class list are an error.
double weighted_f1(const std::vector<std::string>& preds,
                   const std::vector<std::string>& golds,
                   const std::vector<std::string>& classes);

// Sorted distinct gold labels: the fixed class order used everywhere a
// class list is not given explicitly.
std::vector<std::string> distinct_classes(const std::vector<std::string>& golds);

// Both metrics at once, classes taken from the golds.
EvalResult evaluate(const std::vector<std::string>& preds,
                    const std::vector<std::string>& golds);

}  // namespace loft
