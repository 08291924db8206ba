#include "phaforce/nn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace phaforce::nn {

GradCheckReport grad_check(const ParamStore& params, const std::function<Tensor()>& loss, double h, double floor) {
    ParamStore& ps = const_cast<ParamStore&>(params);
    ps.zero_grad();
    Tensor l = loss();
    l.backward();
    // rounding noise of the difference quotient is about eps |L| / h; entries
    // smaller than 1e4 times that cannot be resolved to a 1e-4 relative error
    const double noise = std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(l.item())) / h;
    floor = std::max(floor, 1e4 * noise);
    std::vector<std::vector<double>> analytic;
    for (const auto& [name, t] : params.items())
        analytic.emplace_back(t.has_grad() ? std::vector<double>(t.grad().begin(), t.grad().end())
                                           : std::vector<double>(t.size(), 0.0));

    GradCheckReport rep;
    NoGradGuard ng;
    for (std::size_t k = 0; k < params.items().size(); ++k) {
        Tensor t = params.items()[k].second;
        auto w = t.data();
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double w0 = w[i];
            w[i] = w0 + h;
            const double lp = loss().item();
            w[i] = w0 - h;
            const double lm = loss().item();
            w[i] = w0;
            const double num = (lp - lm) / (2.0 * h);
            const double a = analytic[k][i];
            const double rel = std::abs(a - num) / std::max({std::abs(a), std::abs(num), floor});
            ++rep.checked;
            if (rel > rep.max_rel_error) {
                rep.max_rel_error = rel;
                rep.worst_param = params.items()[k].first;
                rep.worst_index = i;
            }
        }
    }
    return rep;
}

}  // namespace phaforce::nn
