#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>

#include "gdip/stopgrad.hpp"
#include "gdip/tensor.hpp"

namespace gdip {

// A differentiable node: forward evaluation plus vector-Jacobian products
// for its input and its parameters.
struct DiffOp {
    virtual ~DiffOp() = default;
    virtual Tensor forward(const Tensor& input, const Tensor& params) const = 0;
    virtual void vjp(const Tensor& input, const Tensor& params, const Tensor& g_out,
                     Tensor& g_input, Tensor& g_params) const = 0;
};

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::size_t worst_coord = 0;
    bool input_side = true;  // whether the worst coordinate is an input coordinate
    bool pass = false;
};

namespace detail {

inline double rel_err(double analytic, double numeric) {
    double denom = std::max({std::fabs(analytic), std::fabs(numeric), 1e-2});
    return std::fabs(analytic - numeric) / denom;
}

// Compare analytic gradients of a scalar function against central finite
// differences over the given coordinates.
inline void fd_compare(const std::function<double()>& eval, double* coords, std::size_t n,
                       const double* analytic, double step, bool input_side,
                       GradCheckReport& rep) {
    for (std::size_t i = 0; i < n; ++i) {
        double saved = coords[i];
        coords[i] = saved + step;
        double fp = eval();
        coords[i] = saved - step;
        double fm = eval();
        coords[i] = saved;
        double numeric = (fp - fm) / (2.0 * step);
        double e = rel_err(analytic[i], numeric);
        if (e > rep.max_rel_error) {
            rep.max_rel_error = e;
            rep.worst_coord = i;
            rep.input_side = input_side;
        }
    }
}

}  // namespace detail

// Check a DiffOp's vjp against central finite differences of the scalar
// projection L = <g_proj, forward(input, params)>.
inline GradCheckReport grad_check(const DiffOp& op, Tensor input, Tensor params, double step,
                                  double tol, std::uint64_t seed = 7) {
    if (step <= 0.0) throw std::invalid_argument("grad_check: step must be positive");

    // Record stop-gradient statistics on the base pass; every later
    // evaluation (vjp and finite differences) replays them.
    stopgrad::Tape tape;
    Tensor probe = [&] {
        stopgrad::Scope sc(&tape);
        return op.forward(input, params);
    }();
    tape.rewind_for_replay();
    auto replayed = [&](auto&& fn) {
        tape.cursor = 0;
        stopgrad::Scope sc(&tape);
        return fn();
    };

    Tensor probe2 = replayed([&] { return op.forward(input, params); });
    for (std::size_t i = 0; i < probe.size(); ++i)
        if (probe[i] != probe2[i])
            throw std::runtime_error("grad_check: forward is not deterministic");

    auto rng = make_rng(seed);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    Tensor g_proj = Tensor::zeros(probe.shape);
    for (std::size_t i = 0; i < g_proj.size(); ++i) g_proj[i] = dist(rng);

    // The vjp runs without the tape: it recomputes the stop-gradient stats at
    // the base point, where they equal the recorded values.
    Tensor g_input = Tensor::zeros(input.shape);
    Tensor g_params = Tensor::zeros(params.shape);
    op.vjp(input, params, g_proj, g_input, g_params);

    auto eval = [&]() {
        return replayed([&] {
            Tensor out = op.forward(input, params);
            double s = 0.0;
            for (std::size_t i = 0; i < out.size(); ++i) s += g_proj[i] * out[i];
            return s;
        });
    };

    GradCheckReport rep;
    detail::fd_compare(eval, input.data.data(), input.size(), g_input.data.data(), step, true,
                       rep);
    detail::fd_compare(eval, params.data.data(), params.size(), g_params.data.data(), step,
                       false, rep);
    rep.pass = rep.max_rel_error <= tol;
    return rep;
}

// Finite-difference check of a scalar-valued function against an already
// computed analytic gradient over an arbitrary coordinate block.
inline GradCheckReport grad_check_scalar(const std::function<double()>& eval, double* coords,
                                         std::size_t n, const double* analytic, double step,
                                         double tol) {
    if (step <= 0.0) throw std::invalid_argument("grad_check: step must be positive");
    if (eval() != eval()) throw std::runtime_error("grad_check: forward is not deterministic");
    GradCheckReport rep;
    detail::fd_compare(eval, coords, n, analytic, step, true, rep);
    rep.pass = rep.max_rel_error <= tol;
    return rep;
}

}  // namespace gdip
