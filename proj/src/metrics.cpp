#include "volta/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <unordered_map>
#include <unordered_set>

namespace volta {

namespace {

constexpr char kSep = '\x1f';

std::string join_gram(const Sentence& s, std::size_t start, int k) {
    std::string out;
    for (int i = 0; i < k; ++i) {
        if (i) out.push_back(kSep);
        out += s[start + static_cast<std::size_t>(i)];
    }
    return out;
}

void check_sentences(const std::vector<Sentence>& sentences, const char* op) {
    if (sentences.empty()) throw DegenerateInputError(std::string(op) + ": empty corpus");
    for (const auto& s : sentences) {
        if (s.empty()) throw DegenerateInputError(std::string(op) + ": empty sentence");
    }
}

std::unordered_map<std::string, int> ngram_counts(const Sentence& s, int n) {
    std::unordered_map<std::string, int> counts;
    if (static_cast<int>(s.size()) >= n) {
        for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= s.size(); ++i) {
            counts[join_gram(s, i, n)]++;
        }
    }
    return counts;
}

} // namespace

double distinct_k(const std::vector<Sentence>& sentences, int k, bool total_kgram_denominator) {
    if (k < 1) throw ContractError("distinct_k: k must be at least 1");
    check_sentences(sentences, "distinct_k");
    std::unordered_set<std::string> unique;
    long long words = 0, grams = 0;
    for (const auto& s : sentences) {
        words += static_cast<long long>(s.size());
        if (static_cast<int>(s.size()) >= k) {
            for (std::size_t i = 0; i + static_cast<std::size_t>(k) <= s.size(); ++i) {
                unique.insert(join_gram(s, i, k));
                ++grams;
            }
        }
    }
    const long long denom = total_kgram_denominator ? grams : words;
    if (denom == 0) return 0.0;
    return static_cast<double>(unique.size()) / static_cast<double>(denom);
}

double sentence_bleu(const Sentence& hyp, const std::vector<Sentence>& refs, int max_n) {
    if (max_n < 1) throw ContractError("sentence_bleu: max_n must be at least 1");
    if (hyp.empty()) throw DegenerateInputError("sentence_bleu: empty hypothesis");
    check_sentences(refs, "sentence_bleu");

    const int c = static_cast<int>(hyp.size());
    // closest reference length, ties to the shorter
    int r = static_cast<int>(refs[0].size());
    for (const auto& ref : refs) {
        const int len = static_cast<int>(ref.size());
        if (std::abs(len - c) < std::abs(r - c) || (std::abs(len - c) == std::abs(r - c) && len < r)) {
            r = len;
        }
    }

    double log_score = 0.0;
    for (int n = 1; n <= max_n; ++n) {
        auto hyp_counts = ngram_counts(hyp, n);
        std::vector<std::unordered_map<std::string, int>> ref_counts;
        ref_counts.reserve(refs.size());
        for (const auto& ref : refs) ref_counts.push_back(ngram_counts(ref, n));
        long long total = 0, matched = 0;
        for (const auto& [gram, count] : hyp_counts) {
            total += count;
            int best = 0;
            for (const auto& rc : ref_counts) {
                auto it = rc.find(gram);
                if (it != rc.end()) best = std::max(best, it->second);
            }
            matched += std::min<long long>(count, best);
        }
        double p;
        if (n == 1) {
            if (matched == 0) return 0.0; // no smoothing on unigrams
            p = static_cast<double>(matched) / static_cast<double>(total);
        } else {
            p = static_cast<double>(matched + 1) / static_cast<double>(total + 1);
        }
        log_score += std::log(p) / max_n;
    }
    const double bp = c >= r ? 1.0 : std::exp(1.0 - static_cast<double>(r) / c);
    return bp * std::exp(log_score);
}

double self_bleu(const std::vector<Sentence>& sentences, int max_n) {
    check_sentences(sentences, "self_bleu");
    if (sentences.size() < 2) throw DegenerateInputError("self_bleu: need at least two sentences");
    double acc = 0.0;
    for (std::size_t i = 0; i < sentences.size(); ++i) {
        std::vector<Sentence> refs;
        refs.reserve(sentences.size() - 1);
        for (std::size_t j = 0; j < sentences.size(); ++j) {
            if (j != i) refs.push_back(sentences[j]);
        }
        acc += sentence_bleu(sentences[i], refs, max_n);
    }
    return 100.0 * acc / static_cast<double>(sentences.size());
}

PrecisionRecall bleu_precision_recall(const std::vector<std::vector<Sentence>>& hyps_per_context,
                                      const std::vector<std::vector<Sentence>>& refs_per_context,
                                      int max_n) {
    if (hyps_per_context.size() != refs_per_context.size()) {
        throw DimensionError("bleu_precision_recall: context count mismatch");
    }
    if (hyps_per_context.empty()) throw DegenerateInputError("bleu_precision_recall: no contexts");

    // The hypothesis is always the BLEU candidate. Precision walks hypotheses
    // and takes each one's best reference; recall walks references and takes
    // the best hypothesis for each. With one hypothesis and one reference per
    // context the two coincide.
    auto side_mean = [max_n](const std::vector<std::vector<Sentence>>& hyps,
                             const std::vector<std::vector<Sentence>>& refs, bool over_hyps) {
        double acc = 0.0;
        long long count = 0;
        for (std::size_t ctx = 0; ctx < hyps.size(); ++ctx) {
            if (hyps[ctx].empty() || refs[ctx].empty()) {
                throw DegenerateInputError("bleu_precision_recall: context with an empty side");
            }
            if (over_hyps) {
                for (const auto& h : hyps[ctx]) {
                    double best = 0.0;
                    for (const auto& r : refs[ctx]) best = std::max(best, sentence_bleu(h, {r}, max_n));
                    acc += best;
                    ++count;
                }
            } else {
                for (const auto& r : refs[ctx]) {
                    double best = 0.0;
                    for (const auto& h : hyps[ctx]) best = std::max(best, sentence_bleu(h, {r}, max_n));
                    acc += best;
                    ++count;
                }
            }
        }
        return acc / static_cast<double>(count);
    };

    PrecisionRecall pr;
    pr.precision = side_mean(hyps_per_context, refs_per_context, true);
    pr.recall = side_mean(hyps_per_context, refs_per_context, false);
    pr.f1 = pr.precision + pr.recall > 0.0
                ? 2.0 * pr.precision * pr.recall / (pr.precision + pr.recall)
                : 0.0;
    return pr;
}

double perplexity(const std::vector<double>& token_nlls) {
    if (token_nlls.empty()) throw DegenerateInputError("perplexity: no tokens");
    double acc = 0.0;
    for (double v : token_nlls) acc += v;
    return std::exp(acc / static_cast<double>(token_nlls.size()));
}

int active_units(const std::vector<std::vector<double>>& posterior_means, double delta) {
    const std::size_t n = posterior_means.size();
    if (n < 2) throw DegenerateInputError("active_units: need at least two datapoints");
    const std::size_t dims = posterior_means[0].size();
    for (const auto& row : posterior_means) {
        if (row.size() != dims) throw DimensionError("active_units: ragged rows");
    }
    int active = 0;
    for (std::size_t d = 0; d < dims; ++d) {
        double mean = 0.0;
        for (const auto& row : posterior_means) mean += row[d];
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (const auto& row : posterior_means) var += (row[d] - mean) * (row[d] - mean);
        var /= static_cast<double>(n);
        if (var > delta) ++active;
    }
    return active;
}

namespace {

double gaussian_log_density_vec(const std::vector<double>& z, const GaussianPosterior& post) {
    static const double log_2pi = std::log(2.0 * 3.14159265358979323846);
    double acc = 0.0;
    for (std::size_t d = 0; d < z.size(); ++d) {
        const double ls = post.log_sigma.data()[d];
        const double inv_sigma = std::exp(-ls);
        const double u = (z[d] - post.mu.data()[d]) * inv_sigma;
        acc += -0.5 * log_2pi - ls - 0.5 * u * u;
    }
    return acc;
}

} // namespace

double mutual_information(const std::vector<GaussianPosterior>& posteriors,
                          int samples_per_posterior, RandomStream& rng) {
    const std::size_t n = posteriors.size();
    if (n < 2) throw DegenerateInputError("mutual_information: batch must have at least two posteriors");
    if (samples_per_posterior < 1) throw ContractError("mutual_information: samples must be positive");
    const int dims = posteriors[0].count();
    for (const auto& p : posteriors) {
        if (p.count() != dims) throw DimensionError("mutual_information: posterior dim mismatch");
    }
    const double log_n = std::log(static_cast<double>(n));
    double acc = 0.0;
    std::vector<double> z(static_cast<std::size_t>(dims));
    for (const auto& q : posteriors) {
        for (int s = 0; s < samples_per_posterior; ++s) {
            for (int d = 0; d < dims; ++d) {
                z[static_cast<std::size_t>(d)] =
                    q.mu.data()[static_cast<std::size_t>(d)] +
                    std::exp(q.log_sigma.data()[static_cast<std::size_t>(d)]) * rng.normal();
            }
            const double log_qzx = gaussian_log_density_vec(z, q);
            // log q_agg(z) = logsumexp_j log q_j(z) - log N
            double mx = -std::numeric_limits<double>::infinity();
            std::vector<double> lps(n);
            for (std::size_t j = 0; j < n; ++j) {
                lps[j] = gaussian_log_density_vec(z, posteriors[j]);
                mx = std::max(mx, lps[j]);
            }
            double sum = 0.0;
            for (double lp : lps) sum += std::exp(lp - mx);
            const double log_agg = mx + std::log(sum) - log_n;
            acc += log_qzx - log_agg;
        }
    }
    return acc / (static_cast<double>(n) * samples_per_posterior);
}

} // namespace volta
