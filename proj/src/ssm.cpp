#include "cdmamba/ssm.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "cdmamba/error.hpp"
#include "cdmamba/ops.hpp"

namespace cdmamba::ssm {

double phi_exact(double z) { return z == 0.0 ? 1.0 : std::expm1(z) / z; }

double phi_taylor(double z) { return 1.0 + z / 2.0 + z * z / 6.0; }

double phi(double z) { return std::abs(z) < kTaylorThreshold ? phi_taylor(z) : phi_exact(z); }

double phi_derivative(double z) {
    // Series 1/2 + z/3 + z^2/8 + z^3/30 + z^4/144 is accurate to ~1e-17 here.
    if (std::abs(z) < 1e-3) return 0.5 + z * (1.0 / 3.0 + z * (1.0 / 8.0 + z * (1.0 / 30.0 + z / 144.0)));
    return (std::exp(z) - phi_exact(z)) / z;
}

Discretized zoh_discretize(const Tensor& a, const Tensor& b_t, const Tensor& delta) {
    if (a.rank() != 2 || b_t.rank() != 1 || delta.rank() != 1 || b_t.dim(0) != a.dim(1) || delta.dim(0) != a.dim(0)) {
        throw InputError("zoh_discretize: expected A[C,N], B[N], delta[C]; got " + to_string(a.shape()) + ", " +
                         to_string(b_t.shape()) + ", " + to_string(delta.shape()));
    }
    const std::size_t channels = a.dim(0), n = a.dim(1);
    std::vector<double> ab(channels * n), bb(channels * n);
    for (std::size_t c = 0; c < channels; ++c) {
        const double dt = delta.data()[c];
        if (!(dt > 0.0)) throw ConfigError("zoh_discretize: delta must be positive, got " + std::to_string(dt));
        for (std::size_t s = 0; s < n; ++s) {
            const double z = dt * a.data()[c * n + s];
            ab[c * n + s] = std::exp(z);
            bb[c * n + s] = dt * phi(z) * b_t.data()[s];
        }
    }
    Discretized out{detail::make_result("zoh_a_bar", {channels, n}, std::move(ab)),
                    detail::make_result("zoh_b_bar", {channels, n}, std::move(bb))};
    if (detail::tracking({&a, &delta})) {
        detail::record(out.a_bar, {a, delta}, [a, delta, channels, n](std::span<const double> g) {
            auto ga = detail::grad_sink(a);
            auto gd = detail::grad_sink(delta);
            for (std::size_t c = 0; c < channels; ++c) {
                const double dt = delta.data()[c];
                for (std::size_t s = 0; s < n; ++s) {
                    const double av = a.data()[c * n + s];
                    const double e = std::exp(dt * av) * g[c * n + s];
                    if (!ga.empty()) ga[c * n + s] += dt * e;
                    if (!gd.empty()) gd[c] += av * e;
                }
            }
        });
    }
    if (detail::tracking({&a, &b_t, &delta})) {
        detail::record(out.b_bar, {a, b_t, delta}, [a, b_t, delta, channels, n](std::span<const double> g) {
            auto ga = detail::grad_sink(a);
            auto gb = detail::grad_sink(b_t);
            auto gd = detail::grad_sink(delta);
            for (std::size_t c = 0; c < channels; ++c) {
                const double dt = delta.data()[c];
                for (std::size_t s = 0; s < n; ++s) {
                    const double av = a.data()[c * n + s], bv = b_t.data()[s];
                    const double z = dt * av, go = g[c * n + s];
                    const double dphi = phi_derivative(z);
                    if (!ga.empty()) ga[c * n + s] += go * dt * dt * dphi * bv;
                    if (!gb.empty()) gb[s] += go * dt * phi(z);
                    if (!gd.empty()) gd[c] += go * bv * (phi(z) + z * dphi);
                }
            }
        });
    }
    return out;
}

namespace {

struct ScanDims {
    std::size_t len, channels, n;
};

ScanDims check_scan_args(const Tensor& x, const Tensor& delta, const Tensor& a_log, const Tensor& b, const Tensor& c,
                         const Tensor& d) {
    if (x.rank() != 2 || x.dim(0) == 0) throw InputError("scan: expected x[L,C] with L >= 1, got " + to_string(x.shape()));
    const std::size_t len = x.dim(0), channels = x.dim(1);
    if (a_log.rank() != 2 || a_log.dim(0) != channels || a_log.dim(1) == 0) {
        throw InputError("scan: a_log " + to_string(a_log.shape()) + " does not match " + std::to_string(channels) + " channels");
    }
    const std::size_t n = a_log.dim(1);
    if (delta.shape() != x.shape()) throw InputError("scan: delta shape " + to_string(delta.shape()) + " != x shape");
    const Shape bn{len, n};
    if (b.shape() != bn || c.shape() != bn) {
        throw InputError("scan: B/C must be " + to_string(bn) + ", got " + to_string(b.shape()) + " / " + to_string(c.shape()));
    }
    if (d.defined() && (d.rank() != 1 || d.dim(0) != channels)) throw InputError("scan: D must be [C]");
    return {len, channels, n};
}

// exp(z) and phi(z) sharing a single exponential away from the origin.
inline void zoh_coeffs(double z, double& abar, double& ph) {
    abar = std::exp(z);
    if (std::abs(z) < kTaylorThreshold) ph = phi_taylor(z);
    else if (std::abs(z) < 0.5) ph = std::expm1(z) / z;
    else ph = (abar - 1.0) / z;
}

// d phi / dz from already computed exp(z) and phi(z).
inline double phi_derivative_from(double z, double abar, double ph) {
    if (std::abs(z) < 1e-3) return phi_derivative(z);
    return (abar - ph) / z;
}

// One step of the recurrence for all (channel, state) pairs of token t.
// When `abar_out`/`phi_out` are given the coefficients are stored there.
inline void step(const ScanDims& dim, std::size_t t, const double* x, const double* delta, const double* a,
                 const double* b, double* h, double* abar_out = nullptr, double* phi_out = nullptr) {
    for (std::size_t ch = 0; ch < dim.channels; ++ch) {
        const double dt = delta[t * dim.channels + ch];
        const double xv = x[t * dim.channels + ch];
        double* hc = h + ch * dim.n;
        const double* ac = a + ch * dim.n;
        for (std::size_t s = 0; s < dim.n; ++s) {
            double ab, ph;
            zoh_coeffs(dt * ac[s], ab, ph);
            hc[s] = ab * hc[s] + dt * ph * b[t * dim.n + s] * xv;
            if (abar_out != nullptr) {
                abar_out[ch * dim.n + s] = ab;
                phi_out[ch * dim.n + s] = ph;
            }
        }
    }
}

inline void emit(const ScanDims& dim, std::size_t t, const double* x, const double* c, const double* d, const double* h,
                 double* y) {
    for (std::size_t ch = 0; ch < dim.channels; ++ch) {
        double acc = 0.0;
        const double* hc = h + ch * dim.n;
        for (std::size_t s = 0; s < dim.n; ++s) acc += c[t * dim.n + s] * hc[s];
        if (d != nullptr) acc += d[ch] * x[t * dim.channels + ch];
        y[t * dim.channels + ch] = acc;
    }
}

std::vector<double> negative_exp(std::span<const double> a_log) {
    std::vector<double> a(a_log.size());
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = -std::exp(a_log[i]);
    return a;
}

}  // namespace

Tensor scan(const Tensor& x, const Tensor& delta, const Tensor& a_log, const Tensor& b, const Tensor& c, const Tensor& d) {
    const ScanDims dim = check_scan_args(x, delta, a_log, b, c, d);
    const std::size_t state = dim.channels * dim.n;
    auto a = negative_exp(a_log.data());
    const bool track = detail::tracking({&x, &delta, &a_log, &b, &c, &d});

    // hs[t] is the state after token t; kept only when a backward pass may need it.
    std::vector<double> hs(track ? dim.len * state : 0);
    std::vector<double> abars(hs.size()), phis(hs.size());
    std::vector<double> h(state, 0.0);
    std::vector<double> y(dim.len * dim.channels);
    const double* dptr = d.defined() ? d.data().data() : nullptr;
    for (std::size_t t = 0; t < dim.len; ++t) {
        const std::size_t off = track ? t * state : 0;
        step(dim, t, x.data().data(), delta.data().data(), a.data(), b.data().data(), h.data(),
             track ? abars.data() + off : nullptr, track ? phis.data() + off : nullptr);
        emit(dim, t, x.data().data(), c.data().data(), dptr, h.data(), y.data());
        if (track) std::copy(h.begin(), h.end(), hs.begin() + static_cast<std::ptrdiff_t>(t * state));
    }
    auto out = detail::make_result("selective_scan", x.shape(), std::move(y));
    if (!track) return out;

    detail::record(out, {x, delta, a_log, b, c, d},
                   [x, delta, a_log, b, c, d, dim, a = std::move(a), hs = std::move(hs), abars = std::move(abars),
                    phis = std::move(phis)](std::span<const double> gy) {
                       const std::size_t state = dim.channels * dim.n;
                       auto xv = x.data(), dv = delta.data(), bv = b.data(), cv = c.data();
                       auto gx = detail::grad_sink(x);
                       auto gdelta = detail::grad_sink(delta);
                       auto ga_log = detail::grad_sink(a_log);
                       auto gb = detail::grad_sink(b);
                       auto gc = detail::grad_sink(c);
                       auto gd = detail::grad_sink(d);
                       std::vector<double> carry(state, 0.0);  // dL/dh_t flowing back from t+1
                       std::vector<double> ga(state, 0.0);     // dL/dA
                       for (std::size_t t = dim.len; t-- > 0;) {
                           const double* h_t = hs.data() + t * state;
                           const double* h_prev = t > 0 ? hs.data() + (t - 1) * state : nullptr;
                           for (std::size_t ch = 0; ch < dim.channels; ++ch) {
                               const double g = gy[t * dim.channels + ch];
                               const double dt = dv[t * dim.channels + ch];
                               const double xt = xv[t * dim.channels + ch];
                               if (d.defined()) {
                                   if (!gd.empty()) gd[ch] += g * xt;
                                   if (!gx.empty()) gx[t * dim.channels + ch] += g * d.data()[ch];
                               }
                               double gdt = 0.0, gxt = 0.0;
                               for (std::size_t s = 0; s < dim.n; ++s) {
                                   const std::size_t k = ch * dim.n + s;
                                   const double bts = bv[t * dim.n + s];
                                   const double gh = g * cv[t * dim.n + s] + carry[k];
                                   if (!gc.empty()) gc[t * dim.n + s] += g * h_t[k];
                                   const double z = dt * a[k];
                                   const double abar = abars[t * state + k];
                                   const double ph = phis[t * state + k];
                                   const double dph = phi_derivative_from(z, abar, ph);
                                   const double g_abar = h_prev != nullptr ? gh * h_prev[k] : 0.0;
                                   const double g_bbar = gh * xt;
                                   gxt += gh * dt * ph * bts;
                                   gdt += g_abar * abar * a[k] + g_bbar * bts * (ph + z * dph);
                                   ga[k] += g_abar * abar * dt + g_bbar * dt * dt * dph * bts;
                                   if (!gb.empty()) gb[t * dim.n + s] += g_bbar * dt * ph;
                                   carry[k] = gh * abar;
                               }
                               if (!gx.empty()) gx[t * dim.channels + ch] += gxt;
                               if (!gdelta.empty()) gdelta[t * dim.channels + ch] += gdt;
                           }
                       }
                       if (!ga_log.empty()) {
                           for (std::size_t k = 0; k < state; ++k) ga_log[k] += ga[k] * a[k];
                       }
                   });
    return out;
}

Tensor scan_chunked(const Tensor& x, const Tensor& delta, const Tensor& a_log, const Tensor& b, const Tensor& c,
                    const Tensor& d, std::size_t chunk, std::size_t threads) {
    const ScanDims dim = check_scan_args(x, delta, a_log, b, c, d);
    if (chunk == 0) throw ConfigError("scan_chunked: chunk must be positive");
    const std::size_t state = dim.channels * dim.n;
    const std::size_t chunks = (dim.len + chunk - 1) / chunk;
    auto a = negative_exp(a_log.data());
    const double* xp = x.data().data();
    const double* dp = delta.data().data();
    const double* bp = b.data().data();

    // Pass 1: every chunk scanned from a zero state; `decay` is the running
    // product of a_bar inside the chunk.
    std::vector<double> local(dim.len * state), decay(dim.len * state);
    auto scan_chunk = [&](std::size_t k) {
        std::vector<double> h(state, 0.0), p(state, 1.0);
        const std::size_t end = std::min(dim.len, (k + 1) * chunk);
        for (std::size_t t = k * chunk; t < end; ++t) {
            step(dim, t, xp, dp, a.data(), bp, h.data());
            for (std::size_t ch = 0; ch < dim.channels; ++ch) {
                const double dt = dp[t * dim.channels + ch];
                for (std::size_t s = 0; s < dim.n; ++s) p[ch * dim.n + s] *= std::exp(dt * a[ch * dim.n + s]);
            }
            std::copy(h.begin(), h.end(), local.begin() + static_cast<std::ptrdiff_t>(t * state));
            std::copy(p.begin(), p.end(), decay.begin() + static_cast<std::ptrdiff_t>(t * state));
        }
    };
    const std::size_t workers = std::max<std::size_t>(1, std::min(threads, chunks));
    if (workers == 1) {
        for (std::size_t k = 0; k < chunks; ++k) scan_chunk(k);
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&, w] {
                for (std::size_t k = w; k < chunks; k += workers) scan_chunk(k);
            });
        }
        for (auto& th : pool) th.join();
    }

    // Pass 2: carry the true state across chunk boundaries and emit outputs.
    std::vector<double> carry(state, 0.0), h(state);
    std::vector<double> y(dim.len * dim.channels);
    const double* dptr = d.defined() ? d.data().data() : nullptr;
    for (std::size_t k = 0; k < chunks; ++k) {
        const std::size_t end = std::min(dim.len, (k + 1) * chunk);
        for (std::size_t t = k * chunk; t < end; ++t) {
            for (std::size_t i = 0; i < state; ++i) h[i] = local[t * state + i] + decay[t * state + i] * carry[i];
            emit(dim, t, xp, c.data().data(), dptr, h.data(), y.data());
        }
        carry = h;
    }
    return detail::make_result("selective_scan_chunked", x.shape(), std::move(y));
}

SsmParams SsmParams::init(std::size_t inner, std::size_t state_size, bool skip_enabled, Rng& rng) {
    if (inner == 0 || state_size == 0) throw ConfigError("SsmParams: inner width and state size must be >= 1");
    SsmParams p;
    p.inner = inner;
    p.state_size = state_size;
    p.dt_rank = (inner + 15) / 16;
    p.skip_enabled = skip_enabled;

    std::vector<double> a_log(inner * state_size);
    for (std::size_t c = 0; c < inner; ++c)
        for (std::size_t s = 0; s < state_size; ++s) a_log[c * state_size + s] = std::log(static_cast<double>(s + 1));
    p.a_log = Tensor::from({inner, state_size}, std::move(a_log), true);

    p.x_proj = uniform_tensor({inner, p.dt_rank + 2 * state_size}, 1.0 / std::sqrt(static_cast<double>(inner)), rng);
    p.dt_proj = uniform_tensor({p.dt_rank, inner}, 1.0 / std::sqrt(static_cast<double>(p.dt_rank)), rng);

    std::vector<double> bias(inner);
    const double lo = std::log(1e-3), hi = std::log(1e-1);
    for (auto& v : bias) {
        const double dt = std::max(std::exp(uniform(rng, lo, hi)), 1e-4);
        v = dt + std::log(-std::expm1(-dt));  // inverse softplus
    }
    p.dt_bias = Tensor::from({inner}, std::move(bias), true);
    p.d = Tensor::full({inner}, 1.0, true);
    return p;
}

void SsmParams::collect(const std::string& prefix, ParamList& out) const {
    out.push_back({prefix + "a_log", a_log});
    out.push_back({prefix + "x_proj", x_proj});
    out.push_back({prefix + "dt_proj", dt_proj});
    out.push_back({prefix + "dt_bias", dt_bias});
    if (skip_enabled) out.push_back({prefix + "d", d});
}

Tensor selective_scan(const Tensor& x, const SsmParams& p) {
    if (x.rank() != 2 || x.dim(1) != p.inner) {
        throw InputError("selective_scan: expected [L," + std::to_string(p.inner) + "], got " + to_string(x.shape()));
    }
    auto parts = ops::split(ops::matmul(x, p.x_proj), 1, {p.dt_rank, p.state_size, p.state_size});
    Tensor delta = ops::softplus(ops::linear(parts[0], p.dt_proj, p.dt_bias));
    return scan(x, delta, p.a_log, parts[1], parts[2], p.skip_enabled ? p.d : Tensor{});
}

Tensor scan_convolution_oracle(const Tensor& x, const std::vector<double>& a_bar, const std::vector<double>& b_bar,
                               const std::vector<double>& c) {
    if (x.rank() != 2 || x.dim(1) != 1) throw InputError("scan_convolution_oracle: expected x[L,1], got " + to_string(x.shape()));
    if (a_bar.size() != b_bar.size() || a_bar.size() != c.size() || a_bar.empty()) {
        throw InputError("scan_convolution_oracle: a_bar, b_bar and c need the same non-zero length");
    }
    const std::size_t len = x.dim(0);
    std::vector<double> kernel(len, 0.0);
    for (std::size_t s = 0; s < a_bar.size(); ++s) {
        double power = 1.0;
        for (std::size_t j = 0; j < len; ++j) {
            kernel[j] += c[s] * power * b_bar[s];
            power *= a_bar[s];
        }
    }
    std::vector<double> y(len, 0.0);
    auto xv = x.data();
    for (std::size_t t = 0; t < len; ++t)
        for (std::size_t tau = 0; tau <= t; ++tau) y[t] += kernel[t - tau] * xv[tau];
    return Tensor::from({len, 1}, std::move(y));
}

Tensor scan_convolution_oracle(const Tensor& x, double a_bar, double b_bar, double c) {
    return scan_convolution_oracle(x, std::vector<double>{a_bar}, std::vector<double>{b_bar}, std::vector<double>{c});
}

Tensor scan_convolution_oracle(const Tensor& x, const Tensor& a_bar, const Tensor& b_bar, const Tensor& c) {
    if (a_bar.rank() != 2 || a_bar.shape() != b_bar.shape() || a_bar.shape() != c.shape()) {
        throw InputError("scan_convolution_oracle: parameter tables must share one [L,N] shape");
    }
    const std::size_t rows = a_bar.dim(0), n = a_bar.dim(1);
    for (const Tensor* table : {&a_bar, &b_bar, &c}) {
        auto v = table->data();
        for (std::size_t t = 1; t < rows; ++t) {
            if (!std::equal(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(n), v.begin() + static_cast<std::ptrdiff_t>(t * n))) {
                throw UsageError("scan_convolution_oracle: parameters vary over time; the oracle only covers time-invariant systems");
            }
        }
    }
    auto row = [n](const Tensor& t) { return std::vector<double>(t.data().begin(), t.data().begin() + static_cast<std::ptrdiff_t>(n)); };
    return scan_convolution_oracle(x, row(a_bar), row(b_bar), row(c));
}

}  // namespace cdmamba::ssm
