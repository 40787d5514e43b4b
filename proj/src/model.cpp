#include "volta/model.hpp"

#include <algorithm>
#include <cmath>

namespace volta {

void ModelConfig::validate() const {
    if (vocab_size <= kNumSpecialTokens) {
        throw ContractError("ModelConfig: vocab_size must exceed the reserved special tokens");
    }
    if (d_model <= 0 || n_heads <= 0 || n_layers <= 0 || max_seq <= 0) {
        throw ContractError("ModelConfig: architecture counts must be positive");
    }
    if (d_model % n_heads != 0) {
        throw ContractError("ModelConfig: d_model " + std::to_string(d_model) +
                            " not divisible by n_heads " + std::to_string(n_heads));
    }
    if (n_zg < 0 || n_cg < 0 || n_za < 0 || n_ca < 0) {
        throw ContractError("ModelConfig: latent counts must be non-negative");
    }
    if ((n_za > 0 || n_ca > 0) && k <= 0) {
        throw ContractError("ModelConfig: k must be positive when categorical latents exist");
    }
    if (n_latent_slots <= 0) throw ContractError("ModelConfig: n_latent_slots must be positive");
    if (!(tau > 0.0)) throw ContractError("ModelConfig: tau must be positive");
}

PosteriorSet standard_prior(int n_zg, int n_za, int k) {
    PosteriorSet prior;
    if (n_zg > 0) {
        prior.gauss = GaussianPosterior(Tensor::zeros({n_zg}), Tensor::zeros({n_zg}));
    }
    if (n_za > 0) {
        prior.cat = CategoricalPosterior(Tensor::zeros({n_za, k}), k);
    }
    return prior;
}

Tensor multihead_attention(const Tensor& queries, const Tensor& keys, const Tensor& values,
                           int n_heads, int causal_offset) {
    const int d = queries.cols();
    if (keys.cols() != d || values.cols() != d || keys.rows() != values.rows()) {
        throw DimensionError("multihead_attention: inconsistent projection shapes");
    }
    if (d % n_heads != 0) throw DimensionError("multihead_attention: heads do not divide width");
    const int dk = d / n_heads;
    const int tq = queries.rows(), tk = keys.rows();

    Tensor mask;
    if (causal_offset >= 0) {
        std::vector<double> m(static_cast<std::size_t>(tq) * tk, 0.0);
        for (int i = 0; i < tq; ++i) {
            for (int j = 0; j < tk; ++j) {
                if (j > i + causal_offset) m[static_cast<std::size_t>(i) * tk + j] = -1e9;
            }
        }
        mask = Tensor::from_data({tq, tk}, std::move(m), false);
    }

    std::vector<Tensor> heads;
    heads.reserve(static_cast<std::size_t>(n_heads));
    const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));
    for (int h = 0; h < n_heads; ++h) {
        Tensor qh = slice(queries, 1, h * dk, dk);
        Tensor kh = slice(keys, 1, h * dk, dk);
        Tensor vh = slice(values, 1, h * dk, dk);
        Tensor scores = scale(matmul(qh, transpose(kh)), inv_sqrt_dk);
        if (mask.defined()) scores = add(scores, mask);
        heads.push_back(matmul(softmax(scores, 1), vh));
    }
    return n_heads == 1 ? heads[0] : concat(heads, 1);
}

// --- construction -------------------------------------------------------------

Tensor VoltaModel::reg(const std::string& name, std::vector<int> shape, Init init) {
    Tensor t = Tensor::zeros(std::move(shape), true);
    params_.emplace_back(name, t);
    param_init_.push_back(init);
    return t;
}

VoltaModel::VoltaModel(ModelConfig config) : config_(config) {
    config_.validate();
    build();
    // zero init: layer-norm gains to one, everything else stays zero
    for (std::size_t i = 0; i < params_.size(); ++i) {
        if (param_init_[i] == Init::One) {
            auto& d = params_[i].second.data();
            std::fill(d.begin(), d.end(), 1.0);
        }
    }
}

VoltaModel::VoltaModel(ModelConfig config, RandomStream& rng) : config_(config) {
    config_.validate();
    build();
    init_random(rng);
}

void VoltaModel::init_random(RandomStream& rng) {
    for (std::size_t i = 0; i < params_.size(); ++i) {
        auto& d = params_[i].second.data();
        switch (param_init_[i]) {
        case Init::One:
            std::fill(d.begin(), d.end(), 1.0);
            break;
        case Init::Zero:
            std::fill(d.begin(), d.end(), 0.0);
            break;
        case Init::Normal:
            for (auto& v : d) v = rng.normal(0.0, 0.02);
            break;
        }
    }
}

void VoltaModel::build() {
    const ModelConfig& c = config_;
    const int d = c.d_model;

    tok_emb_ = reg("tok_emb", {c.vocab_size, d}, Init::Normal);
    pos_emb_ = reg("pos_emb", {c.max_seq, d}, Init::Normal);

    const bool enc_dec = c.mode == ModelConfig::Mode::EncoderDecoder;

    auto make_block = [&](const std::string& prefix, bool with_cross) {
        Block b;
        b.ln1_g = reg(prefix + ".ln1.g", {d}, Init::One);
        b.ln1_b = reg(prefix + ".ln1.b", {d}, Init::Zero);
        b.wq = reg(prefix + ".attn.wq", {d, d}, Init::Normal);
        b.bq = reg(prefix + ".attn.bq", {d}, Init::Zero);
        b.wk = reg(prefix + ".attn.wk", {d, d}, Init::Normal);
        b.bk = reg(prefix + ".attn.bk", {d}, Init::Zero);
        b.wv = reg(prefix + ".attn.wv", {d, d}, Init::Normal);
        b.bv = reg(prefix + ".attn.bv", {d}, Init::Zero);
        b.wo = reg(prefix + ".attn.wo", {d, d}, Init::Normal);
        b.bo = reg(prefix + ".attn.bo", {d}, Init::Zero);
        if (with_cross) {
            b.lnc_g = reg(prefix + ".lnc.g", {d}, Init::One);
            b.lnc_b = reg(prefix + ".lnc.b", {d}, Init::Zero);
            b.xwq = reg(prefix + ".xattn.wq", {d, d}, Init::Normal);
            b.xbq = reg(prefix + ".xattn.bq", {d}, Init::Zero);
            b.xwk = reg(prefix + ".xattn.wk", {d, d}, Init::Normal);
            b.xbk = reg(prefix + ".xattn.bk", {d}, Init::Zero);
            b.xwv = reg(prefix + ".xattn.wv", {d, d}, Init::Normal);
            b.xbv = reg(prefix + ".xattn.bv", {d}, Init::Zero);
            b.xwo = reg(prefix + ".xattn.wo", {d, d}, Init::Normal);
            b.xbo = reg(prefix + ".xattn.bo", {d}, Init::Zero);
        }
        b.ln2_g = reg(prefix + ".ln2.g", {d}, Init::One);
        b.ln2_b = reg(prefix + ".ln2.b", {d}, Init::Zero);
        b.w1 = reg(prefix + ".ffn.w1", {d, c.d_ff()}, Init::Normal);
        b.b1 = reg(prefix + ".ffn.b1", {c.d_ff()}, Init::Zero);
        b.w2 = reg(prefix + ".ffn.w2", {c.d_ff(), d}, Init::Normal);
        b.b2 = reg(prefix + ".ffn.b2", {d}, Init::Zero);
        return b;
    };

    if (enc_dec) {
        for (int l = 0; l < c.n_layers; ++l) {
            enc_blocks_.push_back(make_block("enc.L" + std::to_string(l), false));
        }
        enc_lnf_g_ = reg("enc.lnf.g", {d}, Init::One);
        enc_lnf_b_ = reg("enc.lnf.b", {d}, Init::Zero);
    }
    for (int l = 0; l < c.n_layers; ++l) {
        dec_blocks_.push_back(make_block("dec.L" + std::to_string(l), enc_dec));
    }
    dec_lnf_g_ = reg("dec.lnf.g", {d}, Init::One);
    dec_lnf_b_ = reg("dec.lnf.b", {d}, Init::Zero);

    // posterior and prior latent heads (one FC column per variable)
    if (c.n_zg > 0) {
        head_mu_w_ = reg("post.mu.w", {d, c.n_zg}, Init::Normal);
        head_mu_b_ = reg("post.mu.b", {c.n_zg}, Init::Zero);
        head_ls_w_ = reg("post.ls.w", {d, c.n_zg}, Init::Normal);
        head_ls_b_ = reg("post.ls.b", {c.n_zg}, Init::Zero);
        prior_mu_w_ = reg("prior.mu.w", {d, c.n_zg}, Init::Normal);
        prior_mu_b_ = reg("prior.mu.b", {c.n_zg}, Init::Zero);
        prior_ls_w_ = reg("prior.ls.w", {d, c.n_zg}, Init::Normal);
        prior_ls_b_ = reg("prior.ls.b", {c.n_zg}, Init::Zero);
    }
    if (c.n_za > 0) {
        head_pi_w_ = reg("post.pi.w", {d, c.n_za * c.k}, Init::Normal);
        head_pi_b_ = reg("post.pi.b", {c.n_za * c.k}, Init::Zero);
        prior_pi_w_ = reg("prior.pi.w", {d, c.n_za * c.k}, Init::Normal);
        prior_pi_b_ = reg("prior.pi.b", {c.n_za * c.k}, Init::Zero);
    }

    auto make_latent_fc = [&](const std::string& prefix, int in_dim, LatentFc& fc) {
        if (in_dim == 0) return;
        if (enc_dec) {
            const int copies = c.share_latent_across_layers ? 1 : c.n_layers;
            for (int l = 0; l < copies; ++l) {
                const std::string tag =
                    c.share_latent_across_layers ? prefix : prefix + ".L" + std::to_string(l);
                fc.kw.push_back(reg(tag + ".k.w", {in_dim, c.n_latent_slots * d}, Init::Normal));
                fc.kb.push_back(reg(tag + ".k.b", {c.n_latent_slots * d}, Init::Zero));
                fc.vw.push_back(reg(tag + ".v.w", {in_dim, c.n_latent_slots * d}, Init::Normal));
                fc.vb.push_back(reg(tag + ".v.b", {c.n_latent_slots * d}, Init::Zero));
            }
        } else {
            fc.emb_w = reg(prefix + ".emb.w", {in_dim, d}, Init::Normal);
            fc.emb_b = reg(prefix + ".emb.b", {d}, Init::Zero);
            fc.mem_w = reg(prefix + ".mem.w", {in_dim, 2 * c.n_layers * d}, Init::Normal);
            fc.mem_b = reg(prefix + ".mem.b", {2 * c.n_layers * d}, Init::Zero);
        }
    };
    make_latent_fc("lat.g", c.latent_dim_g(), lat_g_);
    make_latent_fc("lat.a", c.latent_dim_a(), lat_a_);

    span_start_w_ = reg("span.start.w", {d, 1}, Init::Normal);
    span_start_b_ = reg("span.start.b", {1}, Init::Zero);
    span_end_w_ = reg("span.end.w", {d, 1}, Init::Normal);
    span_end_b_ = reg("span.end.b", {1}, Init::Zero);

    for (int i = 0; i < c.n_cg; ++i) {
        rec_cont_w_.push_back(reg("rec.cont" + std::to_string(i) + ".w", {d, 1}, Init::Normal));
        rec_cont_b_.push_back(reg("rec.cont" + std::to_string(i) + ".b", {1}, Init::Zero));
    }
    for (int j = 0; j < c.n_ca; ++j) {
        rec_disc_w_.push_back(reg("rec.disc" + std::to_string(j) + ".w", {d, c.k}, Init::Normal));
        rec_disc_b_.push_back(reg("rec.disc" + std::to_string(j) + ".b", {c.k}, Init::Zero));
    }

    qami_w_ = reg("qami.w", {d, d}, Init::Normal);
    out_w_ = reg("out.w", {d, c.vocab_size}, Init::Normal);
    out_b_ = reg("out.b", {c.vocab_size}, Init::Zero);
}

Tensor VoltaModel::param(const std::string& name) const {
    for (const auto& [n, t] : params_) {
        if (n == name) return t;
    }
    throw ContractError("VoltaModel: no parameter named '" + name + "'");
}

std::size_t VoltaModel::parameter_count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : params_) n += t.size();
    return n;
}

// --- forward helpers ------------------------------------------------------------

Tensor VoltaModel::embed(const std::vector<int>& ids, const Tensor& offset) const {
    if (static_cast<int>(ids.size()) > config_.max_seq) {
        throw LengthError("sequence of " + std::to_string(ids.size()) +
                          " tokens exceeds max_seq " + std::to_string(config_.max_seq));
    }
    Tensor x = add(embedding(tok_emb_, ids),
                   slice(pos_emb_, 0, 0, static_cast<int>(ids.size())));
    if (offset.defined()) x = bias_add(x, offset);
    return x;
}

Tensor VoltaModel::block_self_attention(const Block& blk, const Tensor& x, bool causal,
                                        const Tensor& key_slot, const Tensor& value_slot) const {
    const int d = config_.d_model;
    Tensor xn = layer_norm(x, blk.ln1_g, blk.ln1_b);
    Tensor q = bias_add(matmul(xn, blk.wq), blk.bq);
    Tensor kk = bias_add(matmul(xn, blk.wk), blk.bk);
    Tensor vv = bias_add(matmul(xn, blk.wv), blk.bv);
    int offset = causal ? 0 : -1;
    if (key_slot.defined()) {
        kk = concat({reshape(key_slot, {1, d}), kk}, 0);
        vv = concat({reshape(value_slot, {1, d}), vv}, 0);
        if (causal) offset = 1; // the slot is past context, visible everywhere
    }
    Tensor att = multihead_attention(q, kk, vv, config_.n_heads, offset);
    return add(x, bias_add(matmul(att, blk.wo), blk.bo));
}

Tensor VoltaModel::block_cross_attention(const Block& blk, const Tensor& x, const Tensor& memory,
                                         const Tensor& k_lat, const Tensor& v_lat) const {
    Tensor xn = layer_norm(x, blk.lnc_g, blk.lnc_b);
    Tensor q = bias_add(matmul(xn, blk.xwq), blk.xbq);
    Tensor kk = bias_add(matmul(memory, blk.xwk), blk.xbk);
    Tensor vv = bias_add(matmul(memory, blk.xwv), blk.xbv);
    if (k_lat.defined()) {
        kk = concat({kk, k_lat}, 0);
        vv = concat({vv, v_lat}, 0);
    }
    Tensor att = multihead_attention(q, kk, vv, config_.n_heads, -1);
    return add(x, bias_add(matmul(att, blk.xwo), blk.xbo));
}

Tensor VoltaModel::block_ffn(const Block& blk, const Tensor& x) const {
    Tensor h = gelu(bias_add(matmul(layer_norm(x, blk.ln2_g, blk.ln2_b), blk.w1), blk.b1));
    return add(x, bias_add(matmul(h, blk.w2), blk.b2));
}

Tensor VoltaModel::encoder_states(const std::vector<int>& seq) const {
    Tensor x = embed(seq, Tensor());
    if (config_.mode == ModelConfig::Mode::DecoderOnly) {
        // shared backbone: the same decoder blocks, no latent connection
        for (const Block& blk : dec_blocks_) {
            x = block_self_attention(blk, x, true, Tensor(), Tensor());
            x = block_ffn(blk, x);
        }
        return layer_norm(x, dec_lnf_g_, dec_lnf_b_);
    }
    for (const Block& blk : enc_blocks_) {
        x = block_self_attention(blk, x, false, Tensor(), Tensor());
        x = block_ffn(blk, x);
    }
    return layer_norm(x, enc_lnf_g_, enc_lnf_b_);
}

const VoltaModel::LatentFc& VoltaModel::channel_fc(LatentChannel channel) const {
    return channel == LatentChannel::Gauss ? lat_g_ : lat_a_;
}

std::pair<Tensor, Tensor> VoltaModel::latent_kv(const Tensor& latent_vec, LatentChannel channel,
                                                int layer) const {
    if (config_.mode != ModelConfig::Mode::EncoderDecoder) {
        throw ModeError("latent_kv: decoder-only mode uses the memory/embedding connection");
    }
    if (!latent_vec.defined()) throw ContractError("latent_kv: undefined latent vector");
    const LatentFc& fc = channel_fc(channel);
    const int idx = config_.share_latent_across_layers ? 0 : layer;
    if (idx < 0 || idx >= static_cast<int>(fc.kw.size())) {
        throw IndexError("latent_kv: layer " + std::to_string(layer) + " out of range");
    }
    const int in_dim = fc.kw[static_cast<std::size_t>(idx)].rows();
    if (latent_vec.rank() != 1 || latent_vec.shape()[0] != in_dim) {
        throw DimensionError("latent_kv: latent vector " + shape_str(latent_vec.shape()) +
                             " does not match FC input [" + std::to_string(in_dim) + "]");
    }
    Tensor v1 = reshape(latent_vec, {1, in_dim});
    Tensor klat = reshape(bias_add(matmul(v1, fc.kw[static_cast<std::size_t>(idx)]),
                                   fc.kb[static_cast<std::size_t>(idx)]),
                          {config_.n_latent_slots, config_.d_model});
    Tensor vlat = reshape(bias_add(matmul(v1, fc.vw[static_cast<std::size_t>(idx)]),
                                   fc.vb[static_cast<std::size_t>(idx)]),
                          {config_.n_latent_slots, config_.d_model});
    return {klat, vlat};
}

MemoryEmbeddingConnection VoltaModel::memory_embedding_connection(const Tensor& latent_vec,
                                                                  LatentChannel channel) const {
    if (config_.mode != ModelConfig::Mode::DecoderOnly) {
        throw ModeError("memory_embedding_connection: requires decoder-only mode");
    }
    if (!latent_vec.defined()) {
        throw ContractError("memory_embedding_connection: undefined latent vector");
    }
    const LatentFc& fc = channel_fc(channel);
    if (!fc.emb_w.defined()) {
        throw ContractError("memory_embedding_connection: channel has no latent dimensions");
    }
    const int in_dim = fc.emb_w.rows();
    if (latent_vec.rank() != 1 || latent_vec.shape()[0] != in_dim) {
        throw DimensionError("memory_embedding_connection: latent vector " +
                             shape_str(latent_vec.shape()) + " does not match FC input [" +
                             std::to_string(in_dim) + "]");
    }
    const int d = config_.d_model;
    Tensor v1 = reshape(latent_vec, {1, in_dim});
    MemoryEmbeddingConnection conn;
    conn.offset = reshape(bias_add(matmul(v1, fc.emb_w), fc.emb_b), {d});
    Tensor mem = bias_add(matmul(v1, fc.mem_w), fc.mem_b); // [1, 2*L*d]
    for (int l = 0; l < config_.n_layers; ++l) {
        Tensor key = reshape(slice(mem, 1, 2 * l * d, d), {d});
        Tensor value = reshape(slice(mem, 1, (2 * l + 1) * d, d), {d});
        conn.slots.emplace_back(key, value);
    }
    return conn;
}

Tensor VoltaModel::decoder_states(const std::vector<int>& seq, const Tensor& memory,
                                  const Tensor& latent_vec, LatentChannel channel) const {
    const bool dec_only = config_.mode == ModelConfig::Mode::DecoderOnly;
    MemoryEmbeddingConnection conn;
    if (dec_only && latent_vec.defined()) {
        conn = memory_embedding_connection(latent_vec, channel);
    }
    Tensor x = embed(seq, conn.offset);
    for (int l = 0; l < config_.n_layers; ++l) {
        const Block& blk = dec_blocks_[static_cast<std::size_t>(l)];
        Tensor kslot, vslot;
        if (!conn.slots.empty()) {
            kslot = conn.slots[static_cast<std::size_t>(l)].first;
            vslot = conn.slots[static_cast<std::size_t>(l)].second;
        }
        x = block_self_attention(blk, x, true, kslot, vslot);
        if (!dec_only) {
            Tensor klat, vlat;
            if (latent_vec.defined()) {
                auto kv = latent_kv(latent_vec, channel, l);
                klat = kv.first;
                vlat = kv.second;
            }
            x = block_cross_attention(blk, x, memory, klat, vlat);
        }
        x = block_ffn(blk, x);
    }
    return layer_norm(x, dec_lnf_g_, dec_lnf_b_);
}

Tensor VoltaModel::head_pool(const Tensor& states) const {
    return reshape(mean_axis(states, 0), {1, config_.d_model});
}

PosteriorSet VoltaModel::apply_latent_heads(const Tensor& pooled, bool prior_heads) const {
    PosteriorSet set;
    const ModelConfig& c = config_;
    if (c.n_zg > 0) {
        const Tensor& mw = prior_heads ? prior_mu_w_ : head_mu_w_;
        const Tensor& mb = prior_heads ? prior_mu_b_ : head_mu_b_;
        const Tensor& lw = prior_heads ? prior_ls_w_ : head_ls_w_;
        const Tensor& lb = prior_heads ? prior_ls_b_ : head_ls_b_;
        set.gauss = GaussianPosterior(reshape(bias_add(matmul(pooled, mw), mb), {c.n_zg}),
                                      reshape(bias_add(matmul(pooled, lw), lb), {c.n_zg}));
    }
    if (c.n_za > 0) {
        const Tensor& pw = prior_heads ? prior_pi_w_ : head_pi_w_;
        const Tensor& pb = prior_heads ? prior_pi_b_ : head_pi_b_;
        set.cat = CategoricalPosterior(
            reshape(bias_add(matmul(pooled, pw), pb), {c.n_za, c.k}), c.k);
    }
    return set;
}

std::vector<int> VoltaModel::posterior_sequence(const std::vector<int>& context,
                                                const std::vector<int>& target) const {
    std::vector<int> seq;
    seq.reserve(context.size() + target.size() + 3);
    seq.push_back(kBosId);
    seq.insert(seq.end(), context.begin(), context.end());
    seq.push_back(kSepId);
    seq.insert(seq.end(), target.begin(), target.end());
    seq.push_back(kEosId);
    return seq;
}

LatentState VoltaModel::encode(const std::vector<int>& context, const std::vector<int>& target,
                               RandomStream& rng, bool variational) const {
    const std::vector<int> seq = posterior_sequence(context, target);
    if (static_cast<int>(seq.size()) > config_.max_seq) {
        throw LengthError("encode: context + target + specials = " + std::to_string(seq.size()) +
                          " exceeds max_seq " + std::to_string(config_.max_seq));
    }
    LatentState state;
    state.posterior = apply_latent_heads(head_pool(encoder_states(seq)), false);
    state.sample.tau = config_.tau;
    if (!state.posterior.gauss.empty()) {
        state.sample.z_g = variational ? sample_gaussian(state.posterior.gauss, rng)
                                       : state.posterior.gauss.mu;
    }
    if (!state.posterior.cat.empty()) {
        state.sample.z_a = variational
                               ? sample_gumbel_softmax(state.posterior.cat, config_.tau, rng)
                               : state.posterior.cat.probs();
    }
    return state;
}

PosteriorSet VoltaModel::prior_from_context(const std::vector<int>& context) const {
    if (context.empty()) throw DegenerateInputError("prior_from_context: empty context");
    std::vector<int> seq;
    seq.reserve(context.size() + 2);
    seq.push_back(kBosId);
    seq.insert(seq.end(), context.begin(), context.end());
    seq.push_back(kEosId);
    if (static_cast<int>(seq.size()) > config_.max_seq) {
        throw LengthError("prior_from_context: context too long");
    }
    return apply_latent_heads(head_pool(encoder_states(seq)), true);
}

Tensor VoltaModel::latent_input(const LatentSample& sample, const LatentCodes& codes,
                                LatentChannel channel) const {
    const ModelConfig& c = config_;
    std::vector<Tensor> parts;
    if (channel == LatentChannel::Gauss) {
        if (c.n_zg > 0) {
            if (!sample.has_gauss() || sample.z_g.shape()[0] != c.n_zg) {
                throw DimensionError("latent_input: z_g does not match n_zg");
            }
            parts.push_back(sample.z_g);
        }
        if (c.n_cg > 0) {
            if (codes.n_continuous() != c.n_cg) {
                throw DimensionError("latent_input: continuous codes do not match n_cg");
            }
            parts.push_back(Tensor::row(codes.continuous));
        }
    } else {
        if (c.n_za > 0) {
            if (!sample.has_cat() || sample.z_a.shape() != std::vector<int>{c.n_za, c.k}) {
                throw DimensionError("latent_input: z_a does not match n_za x k");
            }
            parts.push_back(reshape(sample.z_a, {c.n_za * c.k}));
        }
        if (c.n_ca > 0) {
            if (codes.n_discrete() != c.n_ca || codes.k != c.k) {
                throw DimensionError("latent_input: discrete codes do not match n_ca/k");
            }
            std::vector<double> flat;
            flat.reserve(static_cast<std::size_t>(c.n_ca) * c.k);
            for (int j = 0; j < c.n_ca; ++j) {
                auto oh = codes.one_hot(j);
                flat.insert(flat.end(), oh.begin(), oh.end());
            }
            parts.push_back(Tensor::row(std::move(flat)));
        }
    }
    if (parts.empty()) return Tensor();
    return parts.size() == 1 ? parts[0] : concat(parts, 0);
}

Tensor VoltaModel::decoder_hidden(const std::vector<int>& context, const std::vector<int>& prefix,
                                  const Tensor& latent_vec, LatentChannel channel) const {
    const int m = static_cast<int>(context.size());
    const int n = static_cast<int>(prefix.size());
    if (config_.mode == ModelConfig::Mode::DecoderOnly) {
        std::vector<int> seq;
        seq.reserve(static_cast<std::size_t>(m + n + 2));
        seq.push_back(kBosId);
        seq.insert(seq.end(), context.begin(), context.end());
        seq.push_back(kSepId);
        seq.insert(seq.end(), prefix.begin(), prefix.end());
        if (static_cast<int>(seq.size()) > config_.max_seq) {
            throw LengthError("decoder_hidden: prefix exceeds max_seq");
        }
        Tensor states = decoder_states(seq, Tensor(), latent_vec, channel);
        return slice(states, 0, m + 1, n + 1);
    }
    std::vector<int> enc_seq;
    enc_seq.reserve(static_cast<std::size_t>(m + 2));
    enc_seq.push_back(kBosId);
    enc_seq.insert(enc_seq.end(), context.begin(), context.end());
    enc_seq.push_back(kEosId);
    Tensor memory = encoder_states(enc_seq);
    std::vector<int> dec_seq;
    dec_seq.reserve(static_cast<std::size_t>(n + 1));
    dec_seq.push_back(kBosId);
    dec_seq.insert(dec_seq.end(), prefix.begin(), prefix.end());
    if (static_cast<int>(dec_seq.size()) > config_.max_seq) {
        throw LengthError("decoder_hidden: prefix exceeds max_seq");
    }
    return decoder_states(dec_seq, memory, latent_vec, channel);
}

Tensor VoltaModel::decoder_forward(const std::vector<int>& context, const std::vector<int>& prefix,
                                   const LatentState& latent) const {
    Tensor lvec = latent_input(latent.sample, latent.codes, LatentChannel::Gauss);
    Tensor h = decoder_hidden(context, prefix, lvec, LatentChannel::Gauss);
    return bias_add(matmul(h, out_w_), out_b_);
}

Tensor VoltaModel::span_pass_hidden(const std::vector<int>& context,
                                    const LatentState& latent) const {
    const int m = static_cast<int>(context.size());
    if (m < 1) throw DegenerateInputError("span_pass_hidden: empty context");
    Tensor lvec = latent_input(latent.sample, latent.codes, LatentChannel::Cat);
    if (config_.mode == ModelConfig::Mode::DecoderOnly) {
        std::vector<int> seq;
        seq.reserve(static_cast<std::size_t>(m + 1));
        seq.push_back(kBosId);
        seq.insert(seq.end(), context.begin(), context.end());
        if (static_cast<int>(seq.size()) > config_.max_seq) {
            throw LengthError("span_pass_hidden: context too long");
        }
        Tensor states = decoder_states(seq, Tensor(), lvec, LatentChannel::Cat);
        return slice(states, 0, 1, m);
    }
    std::vector<int> enc_seq;
    enc_seq.push_back(kBosId);
    enc_seq.insert(enc_seq.end(), context.begin(), context.end());
    enc_seq.push_back(kEosId);
    Tensor memory = encoder_states(enc_seq);
    std::vector<int> dec_seq;
    dec_seq.push_back(kBosId);
    dec_seq.insert(dec_seq.end(), context.begin(), context.end());
    if (static_cast<int>(dec_seq.size()) > config_.max_seq) {
        throw LengthError("span_pass_hidden: context too long");
    }
    Tensor states = decoder_states(dec_seq, memory, lvec, LatentChannel::Cat);
    return slice(states, 0, 1, m);
}

std::vector<int> VoltaModel::generate(const std::vector<int>& context, const LatentState& latent,
                                      int max_len, const GenerationStrategy& strategy,
                                      RandomStream& rng) const {
    if (max_len < 1) throw ContractError("generate: max_len must be at least 1");
    NoGradGuard no_grad;
    const int m = static_cast<int>(context.size());
    const int room = config_.mode == ModelConfig::Mode::DecoderOnly ? config_.max_seq - m - 2
                                                                    : config_.max_seq - 1;
    const int cap = std::min(max_len, std::max(0, room));
    std::vector<int> body;
    while (static_cast<int>(body.size()) < cap) {
        Tensor logits = decoder_forward(context, body, latent);
        const int last = logits.rows() - 1;
        int next;
        if (strategy.kind == GenerationStrategy::Kind::Greedy) {
            next = 0;
            for (int j = 1; j < config_.vocab_size; ++j) {
                if (logits.at(last, j) > logits.at(last, next)) next = j;
            }
        } else {
            if (!(strategy.temperature > 0.0)) {
                throw ContractError("generate: sampling temperature must be positive");
            }
            Tensor row = softmax(scale(slice(logits, 0, last, 1), 1.0 / strategy.temperature), 1);
            const double u = rng.uniform();
            double cum = 0.0;
            next = config_.vocab_size - 1;
            for (int j = 0; j < config_.vocab_size; ++j) {
                cum += row.at(0, j);
                if (u < cum) {
                    next = j;
                    break;
                }
            }
        }
        if (next == kEosId) break;
        body.push_back(next);
    }
    return body;
}

SpanPrediction VoltaModel::predict_span(const std::vector<int>& context, const LatentState& latent,
                                        bool constrained) const {
    NoGradGuard no_grad;
    Tensor h = span_pass_hidden(context, latent);
    const int m = h.rows();
    Tensor ps = softmax(reshape(bias_add(matmul(h, span_start_w_), span_start_b_), {m}), 0);
    Tensor pe = softmax(reshape(bias_add(matmul(h, span_end_w_), span_end_b_), {m}), 0);

    SpanPrediction pred;
    pred.start_dist = ps.data();
    pred.end_dist = pe.data();
    if (!constrained) {
        int s = 0, e = 0;
        for (int i = 1; i < m; ++i) {
            if (ps.at(i) > ps.at(s)) s = i;
            if (pe.at(i) > pe.at(e)) e = i;
        }
        pred.start = s + 1;
        pred.end = e + 1;
    } else {
        int bs = 0, be = 0;
        double best = -1.0;
        for (int s = 0; s < m; ++s) {
            for (int e = s; e < m; ++e) {
                const double p = ps.at(s) * pe.at(e);
                if (p > best) {
                    best = p;
                    bs = s;
                    be = e;
                }
            }
        }
        pred.start = bs + 1;
        pred.end = be + 1;
    }
    pred.valid = pred.end >= pred.start;
    return pred;
}

std::vector<RecoveryParam> VoltaModel::RecoveredCodes::params() const {
    std::vector<RecoveryParam> out;
    out.reserve(continuous_mean.size() + discrete_logits.size());
    for (const Tensor& m : continuous_mean) out.push_back(RecoveryParam::continuous(m));
    for (const Tensor& l : discrete_logits) out.push_back(RecoveryParam::discrete(l));
    return out;
}

VoltaModel::RecoveredCodes VoltaModel::recover_codes(const Tensor& hidden) const {
    if (!hidden.defined()) {
        throw DegenerateInputError("recover_codes: no generated-token hidden states");
    }
    Tensor pooled = head_pool(hidden);
    RecoveredCodes rec;
    for (std::size_t i = 0; i < rec_cont_w_.size(); ++i) {
        rec.continuous_mean.push_back(
            reshape(bias_add(matmul(pooled, rec_cont_w_[i]), rec_cont_b_[i]), {}));
    }
    for (std::size_t j = 0; j < rec_disc_w_.size(); ++j) {
        rec.discrete_logits.push_back(
            reshape(bias_add(matmul(pooled, rec_disc_w_[j]), rec_disc_b_[j]), {config_.k}));
    }
    return rec;
}

Tensor VoltaModel::qami_score(const Tensor& question_hidden, const Tensor& answer_hidden) const {
    if (!question_hidden.defined() || !answer_hidden.defined()) {
        throw DegenerateInputError("qami_score: empty span");
    }
    Tensor hq = head_pool(question_hidden);
    Tensor ha = head_pool(answer_hidden);
    return sigmoid(reshape(matmul(matmul(hq, qami_w_), transpose(ha)), {}));
}

} // namespace volta
