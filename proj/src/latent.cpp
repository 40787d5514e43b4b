#include "volta/latent.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

namespace volta {

namespace {
constexpr double kLog2Pi = 1.8378770664093454836; // log(2*pi)
}

GaussianPosterior::GaussianPosterior(Tensor mu_, Tensor log_sigma_)
    : mu(std::move(mu_)), log_sigma(std::move(log_sigma_)) {
    if (mu.rank() != 1 || log_sigma.rank() != 1 || mu.shape() != log_sigma.shape()) {
        throw DimensionError("GaussianPosterior: mu " + shape_str(mu.shape()) +
                             " and log_sigma " + shape_str(log_sigma.shape()) +
                             " must be equal-length vectors");
    }
}

CategoricalPosterior::CategoricalPosterior(Tensor logits_, int k_)
    : logits(std::move(logits_)), k(k_) {
    if (logits.rank() != 2 || logits.shape()[1] != k) {
        throw DimensionError("CategoricalPosterior: logits " + shape_str(logits.shape()) +
                             " must be [n_vars, " + std::to_string(k) + "]");
    }
}

CategoricalPosterior CategoricalPosterior::from_probs(
    const std::vector<std::vector<double>>& probs) {
    if (probs.empty()) throw DegenerateInputError("from_probs: empty");
    const int n = static_cast<int>(probs.size());
    const int k = static_cast<int>(probs[0].size());
    std::vector<double> logits(static_cast<std::size_t>(n) * k);
    for (int j = 0; j < n; ++j) {
        if (static_cast<int>(probs[j].size()) != k) throw DimensionError("from_probs: ragged rows");
        for (int i = 0; i < k; ++i) logits[static_cast<std::size_t>(j) * k + i] = std::log(probs[j][i]);
    }
    return CategoricalPosterior(Tensor::from_data({n, k}, std::move(logits)), k);
}

std::vector<double> LatentCodes::one_hot(int idx) const {
    if (idx < 0 || idx >= n_discrete()) throw IndexError("LatentCodes: bad discrete index");
    std::vector<double> v(static_cast<std::size_t>(k), 0.0);
    v[static_cast<std::size_t>(discrete[idx])] = 1.0;
    return v;
}

std::vector<double> LatentCodes::flat() const {
    std::vector<double> out = continuous;
    for (int j = 0; j < n_discrete(); ++j) {
        auto oh = one_hot(j);
        out.insert(out.end(), oh.begin(), oh.end());
    }
    return out;
}

Tensor sample_gaussian(const GaussianPosterior& post, RandomStream& rng) {
    if (post.empty()) throw ContractError("sample_gaussian: empty posterior");
    const int n = post.count();
    std::vector<double> noise(static_cast<std::size_t>(n));
    for (auto& e : noise) e = rng.normal();
    Tensor eps = Tensor::from_data({n}, std::move(noise), false);
    return add(post.mu, mul(exp(post.log_sigma), eps));
}

Tensor sample_gumbel_softmax(const CategoricalPosterior& post, double tau, RandomStream& rng) {
    if (post.empty()) throw ContractError("sample_gumbel_softmax: empty posterior");
    if (tau <= 0.0) throw ContractError("sample_gumbel_softmax: tau must be positive");
    const int n = post.count(), k = post.k;
    std::vector<double> noise(static_cast<std::size_t>(n) * k);
    for (auto& e : noise) e = rng.gumbel();
    Tensor g = Tensor::from_data({n, k}, std::move(noise), false);
    return softmax(scale(add(post.logits, g), 1.0 / tau), 1);
}

LatentCodes sample_codes(int n_cg, int n_ca, int k, RandomStream& rng) {
    if (n_cg < 0 || n_ca < 0) throw ContractError("sample_codes: counts must be non-negative");
    if (n_ca > 0 && k <= 0) throw ContractError("sample_codes: k must be positive for discrete codes");
    LatentCodes codes;
    codes.k = k;
    codes.continuous.resize(static_cast<std::size_t>(n_cg));
    for (auto& c : codes.continuous) c = rng.uniform(-1.0, 1.0);
    codes.discrete.resize(static_cast<std::size_t>(n_ca));
    for (auto& d : codes.discrete) d = rng.uniform_int(k);
    return codes;
}

Tensor kl_gaussian(const GaussianPosterior& q, const GaussianPosterior& p) {
    if (q.empty() || p.empty()) throw ContractError("kl_gaussian: empty posterior");
    if (q.count() != p.count()) {
        throw DimensionError("kl_gaussian: dimension mismatch " + std::to_string(q.count()) +
                             " vs " + std::to_string(p.count()));
    }
    // log(s'/s) + (s^2 + (mu-mu')^2) / (2 s'^2) - 1/2, with s = exp(log_sigma)
    Tensor diff = sub(q.mu, p.mu);
    Tensor log_ratio = sub(p.log_sigma, q.log_sigma);
    Tensor var_ratio = exp(scale(sub(q.log_sigma, p.log_sigma), 2.0));
    Tensor maha = mul(mul(diff, diff), exp(scale(p.log_sigma, -2.0)));
    return add_scalar(add(log_ratio, scale(add(var_ratio, maha), 0.5)), -0.5);
}

Tensor kl_categorical(const CategoricalPosterior& q, const CategoricalPosterior& p) {
    if (q.empty() || p.empty()) throw ContractError("kl_categorical: empty posterior");
    if (q.count() != p.count() || q.k != p.k) {
        throw DimensionError("kl_categorical: shape mismatch " + shape_str(q.logits.shape()) +
                             " vs " + shape_str(p.logits.shape()));
    }
    const int n = q.count(), k = q.k;

    // Dedicated op: works in log-space and owns the 0 log 0 = 0 convention.
    auto out = std::make_shared<TensorNode>();
    out->shape = {n};
    out->data.assign(static_cast<std::size_t>(n), 0.0);
    out->op = "kl_categorical";
    if (grad_enabled()) {
        out->parents = {q.logits.ptr(), p.logits.ptr()};
        out->requires_grad = q.logits.requires_grad() || p.logits.requires_grad();
    }

    auto log_softmax_row = [k](const double* row, double* out_row) {
        double mx = row[0];
        for (int i = 1; i < k; ++i) mx = std::max(mx, row[i]);
        double denom = 0.0;
        for (int i = 0; i < k; ++i) denom += std::exp(row[i] - mx);
        const double lse = mx + std::log(denom);
        for (int i = 0; i < k; ++i) out_row[i] = row[i] - lse;
    };

    std::vector<double> lq(static_cast<std::size_t>(n) * k), lp(lq.size());
    for (int j = 0; j < n; ++j) {
        log_softmax_row(q.logits.data().data() + static_cast<std::size_t>(j) * k,
                        lq.data() + static_cast<std::size_t>(j) * k);
        log_softmax_row(p.logits.data().data() + static_cast<std::size_t>(j) * k,
                        lp.data() + static_cast<std::size_t>(j) * k);
        double acc = 0.0;
        for (int i = 0; i < k; ++i) {
            const std::size_t idx = static_cast<std::size_t>(j) * k + i;
            const double pq = std::exp(lq[idx]);
            if (pq == 0.0) continue; // 0 log 0 = 0
            if (std::isinf(lp[idx])) {
                throw NumericError("kl_categorical: infinite divergence, p has zero mass where q > 0");
            }
            acc += pq * (lq[idx] - lp[idx]);
        }
        out->data[static_cast<std::size_t>(j)] = acc;
    }

    if (out->requires_grad) {
        out->backward_fn = [n, k, lq = std::move(lq), lp = std::move(lp)](TensorNode& o) {
            TensorNode& a = *o.parents[0];
            TensorNode& b = *o.parents[1];
            if (a.requires_grad) a.ensure_grad();
            if (b.requires_grad) b.ensure_grad();
            for (int j = 0; j < n; ++j) {
                const double g = o.grad[static_cast<std::size_t>(j)];
                const double klj = o.data[static_cast<std::size_t>(j)];
                for (int i = 0; i < k; ++i) {
                    const std::size_t idx = static_cast<std::size_t>(j) * k + i;
                    const double pq = std::exp(lq[idx]);
                    const double pp = std::exp(lp[idx]);
                    if (a.requires_grad) a.grad[idx] += g * pq * (lq[idx] - lp[idx] - klj);
                    if (b.requires_grad) b.grad[idx] += g * (pp - pq);
                }
            }
        };
    }
    return Tensor(out);
}

RecoveryParam RecoveryParam::continuous(Tensor mean) {
    if (mean.size() != 1) throw DimensionError("RecoveryParam: continuous mean must be scalar");
    RecoveryParam r;
    r.kind = Kind::Continuous;
    r.value = std::move(mean);
    return r;
}

RecoveryParam RecoveryParam::discrete(Tensor logits) {
    if (logits.rank() != 1) throw DimensionError("RecoveryParam: discrete logits must be rank-1");
    RecoveryParam r;
    r.kind = Kind::Discrete;
    r.value = std::move(logits);
    return r;
}

Tensor code_log_likelihood(const RecoveryParam& theta, double code) {
    if (theta.kind != RecoveryParam::Kind::Continuous) {
        throw ContractError("code_log_likelihood: continuous code given to a discrete head");
    }
    Tensor mean = theta.value.rank() == 0 ? theta.value : reshape(theta.value, {});
    Tensor diff = sub(Tensor::scalar(code), mean);
    return add_scalar(scale(mul(diff, diff), -0.5), -0.5 * kLog2Pi);
}

Tensor code_log_likelihood(const RecoveryParam& theta, int category) {
    if (theta.kind != RecoveryParam::Kind::Discrete) {
        throw ContractError("code_log_likelihood: discrete code given to a continuous head");
    }
    const int k = theta.value.shape()[0];
    if (category < 0 || category >= k) throw IndexError("code_log_likelihood: category out of range");
    // theta[cat] - logsumexp(theta); the max shift is a constant w.r.t. theta.
    double mx = theta.value.at(0);
    for (int i = 1; i < k; ++i) mx = std::max(mx, theta.value.at(i));
    Tensor lse = add_scalar(log(sum_all(exp(add_scalar(theta.value, -mx)))), mx);
    Tensor picked = reshape(slice(theta.value, 0, category, 1), {});
    return sub(picked, lse);
}

Tensor lerp(const Tensor& z1, const Tensor& z2, double alpha) {
    if (alpha < 0.0 || alpha > 1.0) throw ContractError("lerp: alpha must be in [0,1]");
    if (z1.shape() != z2.shape()) {
        throw DimensionError("lerp: shape mismatch " + shape_str(z1.shape()) + " vs " +
                             shape_str(z2.shape()));
    }
    std::vector<double> out(z1.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = (1.0 - alpha) * z1.data()[i] + alpha * z2.data()[i];
    }
    return Tensor::from_data(z1.shape(), std::move(out), false);
}

LatentSample interpolate_latents(const LatentSample& a, const LatentSample& b, double alpha) {
    if (alpha < 0.0 || alpha > 1.0) throw ContractError("interpolate_latents: alpha must be in [0,1]");
    LatentSample out;
    out.tau = a.tau;
    if (a.has_gauss() != b.has_gauss() || a.has_cat() != b.has_cat()) {
        throw DimensionError("interpolate_latents: mismatched latent families");
    }
    if (a.has_gauss()) out.z_g = lerp(a.z_g, b.z_g, alpha);
    if (a.has_cat()) {
        Tensor mixed = lerp(a.z_a, b.z_a, alpha);
        const int n = mixed.shape()[0], k = mixed.shape()[1];
        for (int j = 0; j < n; ++j) {
            double s = 0.0;
            for (int i = 0; i < k; ++i) s += mixed.at(j, i);
            for (int i = 0; i < k; ++i) mixed.set(j, i, mixed.at(j, i) / s);
        }
        out.z_a = mixed;
    }
    return out;
}

} // namespace volta
