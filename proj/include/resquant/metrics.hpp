#ifndef RESQUANT_METRICS_HPP
#define RESQUANT_METRICS_HPP

#include <vector>

#include "resquant/errors.hpp"
#include "resquant/network.hpp"
#include "resquant/tensor.hpp"

namespace resquant {

/// Worst-case logit deviation between two evaluators over a sample set:
/// max over xs of the max-abs output difference (the empirical counterpart
/// of the certified bounds). Evaluators are anything callable as
/// Tensor(const Tensor&); a Network is adapted automatically.
template <typename F, typename G>
double logits_max_error(F&& f, G&& g, const std::vector<Tensor>& xs) {
    if (xs.empty()) throw InvalidInputError("logits_max_error needs at least one input");
    double worst = 0.0;
    for (const Tensor& x : xs) {
        const Tensor a = f(x);
        const Tensor b = g(x);
        if (!a.same_shape(b))
            throw InvalidInputError("logits_max_error: evaluators disagree on output shape");
        worst = std::max(worst, max_abs_diff(a, b));
    }
    return worst;
}

inline auto evaluator(const Network& net) {
    return [&net](const Tensor& x) { return forward(net, x); };
}

inline double logits_max_error(const Network& f, const Network& g,
                               const std::vector<Tensor>& xs) {
    return logits_max_error(evaluator(f), evaluator(g), xs);
}

} // namespace resquant

#endif
