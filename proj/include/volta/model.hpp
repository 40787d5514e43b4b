#pragma once

#include <string>
#include <utility>
#include <vector>

#include "volta/latent.hpp"
#include "volta/rng.hpp"
#include "volta/tensor.hpp"

namespace volta {

// Reserved token ids shared by the tokenizer and the model.
constexpr int kBosId = 0;
constexpr int kEosId = 1;
constexpr int kPadId = 2;
constexpr int kSepId = 3;
constexpr int kNumSpecialTokens = 4;

struct ModelConfig {
    enum class Mode { DecoderOnly, EncoderDecoder };

    Mode mode = Mode::DecoderOnly;
    int vocab_size = 0;
    int d_model = 64;
    int n_heads = 4;
    int n_layers = 2;
    int max_seq = 64;
    int n_zg = 32; // Gaussian latent variables
    int n_cg = 4;  // uniform latent codes
    int n_za = 20; // categorical latent variables
    int n_ca = 5;  // categorical latent codes
    int k = 10;    // categories per categorical variable/code
    int n_latent_slots = 4;
    bool share_latent_across_layers = false;
    double tau = 1.0; // Gumbel-Softmax temperature

    int d_k() const { return d_model / n_heads; }
    int d_ff() const { return 4 * d_model; }
    // flattened [z;c] widths for the two latent channels
    int latent_dim_g() const { return n_zg + n_cg; }
    int latent_dim_a() const { return (n_za + n_ca) * k; }
    void validate() const;
};

// Everything one example's latent space holds: posterior and prior parameter
// sets, the reparametrized sample, and the input-independent codes.
struct LatentState {
    PosteriorSet posterior;
    PosteriorSet prior;
    LatentSample sample;
    LatentCodes codes;
};

// 1-based inclusive span over the context; valid == (end >= start).
struct SpanPrediction {
    int start = 0;
    int end = 0;
    bool valid = false;
    std::vector<double> start_dist;
    std::vector<double> end_dist;
};

struct GenerationStrategy {
    enum class Kind { Greedy, Sample };
    Kind kind = Kind::Greedy;
    double temperature = 1.0;

    static GenerationStrategy greedy() { return {}; }
    static GenerationStrategy sample(double temperature = 1.0) {
        return {Kind::Sample, temperature};
    }
};

// Decoder-only latent connection: one embedding offset added to every token
// embedding plus one self-attention key/value slot per layer.
struct MemoryEmbeddingConnection {
    Tensor offset;                                 // [d_model]
    std::vector<std::pair<Tensor, Tensor>> slots;  // per layer (key, value), each [d_model]
};

// Which latent channel feeds the decoder: the continuous [z_g;c_g] channel
// drives sequence generation, the discrete [z_a;c_a] channel drives span
// prediction.
enum class LatentChannel { Gauss, Cat };

// Multi-head softmax(Q K^T / sqrt(d_k)) V. causal_offset < 0 disables masking;
// otherwise query i may attend key j iff j <= i + causal_offset.
Tensor multihead_attention(const Tensor& queries, const Tensor& keys, const Tensor& values,
                           int n_heads, int causal_offset = -1);

// N(0,1) / uniform prior parameter set for the configured latent counts.
PosteriorSet standard_prior(int n_zg, int n_za, int k);

class VoltaModel {
public:
    // Gaussian(0, 0.02) weight init, deterministic in the stream.
    VoltaModel(ModelConfig config, RandomStream& rng);
    // All weights and biases zero (layer-norm gains one); for tests.
    explicit VoltaModel(ModelConfig config);

    const ModelConfig& config() const { return config_; }
    const std::vector<std::pair<std::string, Tensor>>& parameters() const { return params_; }
    Tensor param(const std::string& name) const;
    std::size_t parameter_count() const;

    // Posterior heads over the pooled encoding of [BOS ctx SEP tgt EOS] and a
    // reparametrized sample. variational=false short-circuits to the
    // posterior mean / probability vector.
    LatentState encode(const std::vector<int>& context, const std::vector<int>& target,
                       RandomStream& rng, bool variational = true) const;

    // Same head structure applied to the context-only encoding; no sampling.
    PosteriorSet prior_from_context(const std::vector<int>& context) const;

    // Flattened latent-channel inputs; undefined when the channel is empty.
    Tensor latent_input(const LatentSample& sample, const LatentCodes& codes,
                        LatentChannel channel) const;

    // (K_latent, V_latent), each [n_latent_slots x d_model], from the given
    // channel's per-layer FC pair. Encoder-decoder connection.
    std::pair<Tensor, Tensor> latent_kv(const Tensor& latent_vec, LatentChannel channel,
                                        int layer = 0) const;

    // Optimus-style fallback for decoder-only mode.
    MemoryEmbeddingConnection memory_embedding_connection(const Tensor& latent_vec,
                                                          LatentChannel channel) const;

    // Hidden states of the decoder over [context, prefix] with the channel's
    // latent connection applied; rows are the n+1 next-token prediction
    // positions when prefix has n tokens.
    Tensor decoder_hidden(const std::vector<int>& context, const std::vector<int>& prefix,
                          const Tensor& latent_vec, LatentChannel channel) const;

    // Next-token logits at each prediction position.
    Tensor decoder_forward(const std::vector<int>& context, const std::vector<int>& prefix,
                           const LatentState& latent) const;

    // Hidden states over the context under the discrete channel, rows 1..m of
    // the span pass; used for span prediction and discrete code recovery.
    Tensor span_pass_hidden(const std::vector<int>& context, const LatentState& latent) const;

    // Autoregressive decoding from BOS; stops at EOS or max_len body tokens.
    std::vector<int> generate(const std::vector<int>& context, const LatentState& latent,
                              int max_len, const GenerationStrategy& strategy,
                              RandomStream& rng) const;

    // Start/end heads over span-pass hidden states; independent argmax with
    // ties to the lowest index. constrained=true searches the best pair with
    // end >= start instead.
    SpanPrediction predict_span(const std::vector<int>& context, const LatentState& latent,
                                bool constrained = false) const;

    struct RecoveredCodes {
        std::vector<Tensor> continuous_mean; // scalars
        std::vector<Tensor> discrete_logits; // [k] each
        std::vector<RecoveryParam> params() const;
    };

    // Mean-pools the given decoder hidden states and applies every
    // recovery head.
    RecoveredCodes recover_codes(const Tensor& hidden) const;

    // sigmoid(mean(h_q)^T W mean(h_a)).
    Tensor qami_score(const Tensor& question_hidden, const Tensor& answer_hidden) const;

private:
    struct Block {
        Tensor ln1_g, ln1_b, wq, bq, wk, bk, wv, bv, wo, bo;
        Tensor lnc_g, lnc_b, xwq, xbq, xwk, xbk, xwv, xbv, xwo, xbo; // cross-attention
        Tensor ln2_g, ln2_b, w1, b1, w2, b2;
    };
    struct LatentFc {
        // encoder-decoder: per-layer (or shared) K/V projections
        std::vector<Tensor> kw, kb, vw, vb;
        // decoder-only: embedding offset and per-layer memory slots
        Tensor emb_w, emb_b, mem_w, mem_b;
    };

    enum class Init : char { Zero, One, Normal };
    Tensor reg(const std::string& name, std::vector<int> shape, Init init);
    void build();
    void init_random(RandomStream& rng);

    Tensor embed(const std::vector<int>& ids, const Tensor& offset) const;
    Tensor encoder_states(const std::vector<int>& seq) const;
    Tensor decoder_states(const std::vector<int>& seq, const Tensor& memory,
                          const Tensor& latent_vec, LatentChannel channel) const;
    Tensor block_self_attention(const Block& blk, const Tensor& x, bool causal,
                                const Tensor& key_slot, const Tensor& value_slot) const;
    Tensor block_cross_attention(const Block& blk, const Tensor& x, const Tensor& memory,
                                 const Tensor& k_lat, const Tensor& v_lat) const;
    Tensor block_ffn(const Block& blk, const Tensor& x) const;
    Tensor head_pool(const Tensor& states) const;
    PosteriorSet apply_latent_heads(const Tensor& pooled, bool prior_heads) const;
    const LatentFc& channel_fc(LatentChannel channel) const;
    std::vector<int> posterior_sequence(const std::vector<int>& context,
                                        const std::vector<int>& target) const;

    ModelConfig config_;
    std::vector<std::pair<std::string, Tensor>> params_;
    std::vector<Init> param_init_;

    Tensor tok_emb_, pos_emb_;
    std::vector<Block> dec_blocks_;
    std::vector<Block> enc_blocks_; // encoder-decoder mode only
    Tensor dec_lnf_g_, dec_lnf_b_, enc_lnf_g_, enc_lnf_b_;
    Tensor head_mu_w_, head_mu_b_, head_ls_w_, head_ls_b_, head_pi_w_, head_pi_b_;
    Tensor prior_mu_w_, prior_mu_b_, prior_ls_w_, prior_ls_b_, prior_pi_w_, prior_pi_b_;
    LatentFc lat_g_, lat_a_;
    Tensor span_start_w_, span_start_b_, span_end_w_, span_end_b_;
    std::vector<Tensor> rec_cont_w_, rec_cont_b_, rec_disc_w_, rec_disc_b_;
    Tensor qami_w_;
    Tensor out_w_, out_b_;
};

} // namespace volta
