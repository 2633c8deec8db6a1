#include "loft/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "loft/errors.hpp"

namespace loft {

std::string normalize_text(const std::string& s) {
    std::string out;
    bool pending_space = false;
    for (unsigned char c : s) {
        if (std::isspace(c)) {
            if (!out.empty()) pending_space = true;
            continue;
        }
        if (pending_space) {
            out += ' ';
            pending_space = false;
        }
        out += static_cast<char>(std::tolower(c));
    }
    return out;
}

namespace {

bool contains_normalized(const std::string& haystack_norm,
                         const std::string& needle) {
    return haystack_norm.find(normalize_text(needle)) != std::string::npos;
}

}  // namespace

double accuracy(const std::vector<std::string>& preds,
                const std::vector<std::string>& golds) {
    if (preds.size() != golds.size())
        throw InputError("got " + std::to_string(preds.size()) +
                         " predictions for " + std::to_string(golds.size()) +
                         " gold answers");
    if (preds.empty()) return 0.0;
    int64_t correct = 0;
    for (size_t i = 0; i < preds.size(); ++i)
        if (contains_normalized(normalize_text(preds[i]), golds[i])) ++correct;
    return static_cast<double>(correct) / static_cast<double>(preds.size());
}

std::string map_to_class(const std::string& pred,
                         const std::vector<std::string>& classes) {
    const std::string norm = normalize_text(pred);
    for (const std::string& c : classes)
        if (contains_normalized(norm, c)) return c;
    return "";
}

std::vector<std::string> distinct_classes(
    const std::vector<std::string>& golds) {
    std::set<std::string> s(golds.begin(), golds.end());
    return std::vector<std::string>(s.begin(), s.end());
}

namespace {

EvalResult confusion_eval(const std::vector<std::string>& preds,
                          const std::vector<std::string>& golds,
                          const std::vector<std::string>& classes) {
    EvalResult res;
    res.n = static_cast<int64_t>(golds.size());
    std::map<std::string, int64_t> tp, fp, fn;
    for (size_t i = 0; i < golds.size(); ++i) {
        if (std::find(classes.begin(), classes.end(), golds[i]) ==
            classes.end())
            throw LabelError("gold label '" + golds[i] +
                             "' is not in the class set");
        const std::string pc = map_to_class(preds[i], classes);
        if (pc == golds[i])
            ++tp[golds[i]];
        else {
            ++fn[golds[i]];
            if (!pc.empty()) ++fp[pc];
        }
    }
    double wf1 = 0.0;
    for (const std::string& c : classes) {
        ClassStats st;
        st.support = tp[c] + fn[c];
        const int64_t predicted = tp[c] + fp[c];
        st.precision = predicted > 0 ? static_cast<double>(tp[c]) /
                                           static_cast<double>(predicted)
                                     : 0.0;
        st.recall = st.support > 0 ? static_cast<double>(tp[c]) /
                                         static_cast<double>(st.support)
                                   : 0.0;
        st.f1 = st.precision + st.recall > 0.0
                    ? 2.0 * st.precision * st.recall /
                          (st.precision + st.recall)
                    : 0.0;
        res.per_class[c] = st;
        if (res.n > 0)
            wf1 += static_cast<double>(st.support) /
                   static_cast<double>(res.n) * st.f1;
    }
    res.weighted_f1 = wf1;
    return res;
}

}  // namespace

double weighted_f1(const std::vector<std::string>& preds,
                   const std::vector<std::string>& golds,
                   const std::vector<std::string>& classes) {
    if (preds.size() != golds.size())
        throw InputError("got " + std::to_string(preds.size()) +
                         " predictions for " + std::to_string(golds.size()) +
                         " gold answers");
    return *confusion_eval(preds, golds, classes).weighted_f1;
}

EvalResult evaluate(const std::vector<std::string>& preds,
                    const std::vector<std::string>& golds) {
    if (preds.size() != golds.size())
        throw InputError("got " + std::to_string(preds.size()) +
                         " predictions for " + std::to_string(golds.size()) +
                         " gold answers");
    EvalResult res = preds.empty()
                         ? EvalResult{}
                         : confusion_eval(preds, golds,
                                          distinct_classes(golds));
    res.accuracy = accuracy(preds, golds);
    res.n = static_cast<int64_t>(golds.size());
    return res;
}

}  // namespace loft
