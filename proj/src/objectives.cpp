#include "volta/objectives.hpp"

#include <cmath>
#include <string>

namespace volta {

void LossWeights::validate() const {
    if (beta_max < 0 || gamma < 0 || lambda_fb < 0 || qami_weight < 0) {
        throw ContractError("LossWeights: weights must be non-negative");
    }
    if (!(warmup_fraction > 0.0) || warmup_fraction > 1.0) {
        throw ContractError("LossWeights: warmup_fraction must be in (0,1]");
    }
}

Tensor reconstruction_loss(const Tensor& logits, const std::vector<int>& targets, int pad_id) {
    return cross_entropy(logits, targets, pad_id);
}

double beta_at(long long step, long long total_steps, const LossWeights& weights) {
    weights.validate();
    if (total_steps <= 0) throw ContractError("beta_at: total_steps must be positive");
    if (step < 0 || step > total_steps) {
        throw ContractError("beta_at: step " + std::to_string(step) + " outside [0, " +
                            std::to_string(total_steps) + "]");
    }
    const double warmup = weights.warmup_fraction * static_cast<double>(total_steps);
    const double frac = static_cast<double>(step) / warmup;
    return weights.beta_max * (frac < 1.0 ? frac : 1.0);
}

Tensor regularization_loss(const Tensor& kl_gauss, const Tensor& kl_cat, double lambda,
                           bool joint_mean) {
    if (lambda < 0) throw ContractError("regularization_loss: lambda must be non-negative");
    auto check_nonneg = [](const Tensor& kl) {
        for (double v : kl.data()) {
            if (v < -1e-12) {
                throw ContractError("regularization_loss: negative KL input " + std::to_string(v));
            }
        }
    };
    std::vector<Tensor> parts;
    if (kl_gauss.defined()) {
        check_nonneg(kl_gauss);
        parts.push_back(kl_gauss);
    }
    if (kl_cat.defined()) {
        check_nonneg(kl_cat);
        parts.push_back(kl_cat);
    }
    if (parts.empty()) return Tensor::scalar(0.0);
    if (joint_mean) {
        Tensor pooled = parts.size() == 1 ? parts[0] : concat(parts, 0);
        return mean_all(clamp_min(pooled, lambda));
    }
    Tensor acc = mean_all(clamp_min(parts[0], lambda));
    for (std::size_t i = 1; i < parts.size(); ++i) {
        acc = add(acc, mean_all(clamp_min(parts[i], lambda)));
    }
    return scale(acc, 1.0 / static_cast<double>(parts.size()));
}

Tensor vmim_loss(const std::vector<RecoveryParam>& thetas, const LatentCodes& codes) {
    const int n_cont = codes.n_continuous();
    const int n_disc = codes.n_discrete();
    if (static_cast<int>(thetas.size()) != n_cont + n_disc) {
        throw ContractError("vmim_loss: " + std::to_string(thetas.size()) + " heads for " +
                            std::to_string(n_cont + n_disc) + " codes");
    }
    if (thetas.empty()) return Tensor::scalar(0.0);
    Tensor acc;
    for (int i = 0; i < n_cont; ++i) {
        Tensor nll = scale(code_log_likelihood(thetas[static_cast<std::size_t>(i)], codes.continuous[static_cast<std::size_t>(i)]), -1.0);
        acc = acc.defined() ? add(acc, nll) : nll;
    }
    for (int j = 0; j < n_disc; ++j) {
        Tensor nll = scale(code_log_likelihood(thetas[static_cast<std::size_t>(n_cont + j)], codes.discrete[static_cast<std::size_t>(j)]), -1.0);
        acc = acc.defined() ? add(acc, nll) : nll;
    }
    return scale(acc, 1.0 / static_cast<double>(thetas.size()));
}

namespace {

Tensor mean_log(const std::vector<Tensor>& scores, bool one_minus, const char* side) {
    Tensor acc;
    for (const Tensor& s : scores) {
        const double v = s.value();
        if (!(v > 0.0) || !(v < 1.0)) {
            throw ContractError(std::string("qami_loss: ") + side + " score " + std::to_string(v) +
                                " outside (0,1)");
        }
        Tensor term = one_minus ? log(add_scalar(scale(s, -1.0), 1.0)) : log(s);
        acc = acc.defined() ? add(acc, term) : term;
    }
    return scale(acc, 1.0 / static_cast<double>(scores.size()));
}

} // namespace

Tensor qami_loss(const std::vector<Tensor>& pos_scores, const std::vector<Tensor>& neg_q_scores,
                 const std::vector<Tensor>& neg_a_scores) {
    if (pos_scores.empty()) throw ContractError("qami_loss: positive scores required");
    if (neg_q_scores.empty() || neg_a_scores.empty()) {
        throw ContractError("qami_loss: negative samples required on both sides");
    }
    Tensor bound = add(mean_log(pos_scores, false, "positive"),
                       add(scale(mean_log(neg_q_scores, true, "negative-question"), 0.5),
                           scale(mean_log(neg_a_scores, true, "negative-answer"), 0.5)));
    return scale(bound, -1.0);
}

TotalLoss total_loss(const Tensor& ae, const Tensor& reg, const Tensor& vmim, const Tensor& qami,
                     const LossWeights& weights, long long step, long long total_steps,
                     std::vector<double> kl_per_dim) {
    weights.validate();
    auto part_value = [](const Tensor& t, const char* name) {
        if (!t.defined()) return 0.0;
        const double v = t.value();
        if (!std::isfinite(v)) {
            throw NumericError(std::string("total_loss: ") + name + " is not finite (" +
                               std::to_string(v) + ")");
        }
        return v;
    };
    TotalLoss out;
    out.report.ae = part_value(ae, "ae");
    out.report.reg = part_value(reg, "reg");
    out.report.vmim = part_value(vmim, "vmim");
    out.report.qami = part_value(qami, "qami");
    out.report.beta_used = beta_at(step, total_steps, weights);
    out.report.kl_per_dim = std::move(kl_per_dim);

    Tensor total = ae.defined() ? ae : Tensor::scalar(0.0);
    if (reg.defined()) total = add(total, scale(reg, out.report.beta_used));
    if (vmim.defined()) total = add(total, scale(vmim, weights.gamma));
    if (qami.defined()) total = add(total, scale(qami, weights.qami_weight));
    out.report.total = total.value();
    out.value = total;
    return out;
}

} // namespace volta
