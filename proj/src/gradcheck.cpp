#include "maelab/gradcheck.hpp"

#include "maelab/error.hpp"
#include "maelab/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace maelab {

std::string GradCheckResult::summary() const {
    char buf[160];
    if (ok) {
        std::snprintf(buf, sizeof(buf), "grad_check ok: %lld coords, max rel error %.3g",
                      static_cast<long long>(coords_checked), max_rel_error);
        return buf;
    }
    std::string s;
    std::snprintf(buf, sizeof(buf), "grad_check FAILED: %zu of %lld coords off", failures.size(),
                  static_cast<long long>(coords_checked));
    s = buf;
    const size_t show = std::min<size_t>(failures.size(), 5);
    for (size_t i = 0; i < show; ++i) {
        const GradCheckFailure& f = failures[i];
        std::snprintf(buf, sizeof(buf),
                      "\n  input %zu coord %lld: analytic %.9g vs numeric %.9g (rel %.3g)",
                      f.input, static_cast<long long>(f.coord), f.analytic, f.numeric,
                      f.rel_error);
        s += buf;
    }
    if (failures.size() > show) s += "\n  ...";
    return s;
}

GradCheckResult grad_check(const std::function<Tensor(Tape*, std::vector<Tensor>&)>& fn,
                           std::vector<Tensor> inputs, const GradCheckOptions& options) {
    if (options.step <= 0.0 || options.tolerance <= 0.0) {
        throw ValueError("grad_check: step and tolerance must be positive");
    }

    for (Tensor& t : inputs) t.zero_grad();

    Tape tape;
    Tensor out = fn(&tape, inputs);
    if (!out.defined() || out.numel() != 1) {
        throw ValueError("grad_check: function under test must return a scalar");
    }
    tape.backward(out);

    // Snapshot the analytic gradients before finite differences mutate inputs.
    std::vector<std::vector<double>> analytic(inputs.size());
    for (size_t i = 0; i < inputs.size(); ++i) {
        if (!inputs[i].requires_grad()) continue;
        if (inputs[i].has_grad()) {
            auto g = inputs[i].grad();
            analytic[i].assign(g.begin(), g.end());
        } else {
            analytic[i].assign(static_cast<size_t>(inputs[i].numel()), 0.0);
        }
    }

    GradCheckResult result;
    for (size_t i = 0; i < inputs.size(); ++i) {
        Tensor& t = inputs[i];
        if (!t.requires_grad()) continue;

        std::vector<int64_t> coords;
        if (t.numel() <= options.max_coords) {
            coords.resize(static_cast<size_t>(t.numel()));
            for (size_t c = 0; c < coords.size(); ++c) coords[c] = static_cast<int64_t>(c);
        } else {
            Rng rng(Rng::derive(options.seed, {static_cast<uint64_t>(i)}));
            coords = sample_without_replacement(rng, t.numel(), options.max_coords);
        }

        auto values = t.mutable_data();
        for (int64_t c : coords) {
            const double original = values[static_cast<size_t>(c)];
            if (options.skip_below > 0.0 && std::abs(original) < options.skip_below) continue;

            values[static_cast<size_t>(c)] = original + options.step;
            const double f_plus = fn(nullptr, inputs).item();
            values[static_cast<size_t>(c)] = original - options.step;
            const double f_minus = fn(nullptr, inputs).item();
            values[static_cast<size_t>(c)] = original;

            const double numeric = (f_plus - f_minus) / (2.0 * options.step);
            const double a = analytic[i][static_cast<size_t>(c)];
            const double rel =
                std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-6});

            ++result.coords_checked;
            result.max_rel_error = std::max(result.max_rel_error, rel);
            if (rel > options.tolerance) {
                result.ok = false;
                result.failures.push_back({i, c, a, numeric, rel});
            }
        }
    }
    return result;
}

} // namespace maelab
