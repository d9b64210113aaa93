#include "csanmt/transformer.hpp"

#include <cmath>

namespace csanmt {

Tensor sinusoid_rows(int max_t, int hidden) {
    Tensor pe({max_t, hidden});
    for (int pos = 0; pos < max_t; ++pos) {
        for (int i = 0; i < hidden; i += 2) {
            double angle = pos / std::pow(10000.0, static_cast<double>(i) / hidden);
            pe.at(pos, i) = std::sin(angle);
            if (i + 1 < hidden) pe.at(pos, i + 1) = std::cos(angle);
        }
    }
    return pe;
}

void init_embedding(ParamStore& ps, const std::string& name, int vocab, int hidden, Rng& rng) {
    Tensor& t = ps.add(name, {vocab, hidden});
    Rng r = rng.split(name);
    r.fill_normal(t, 1.0 / std::sqrt(static_cast<double>(hidden)));
}

void init_linear(ParamStore& ps, const std::string& prefix, int in, int out, Rng& rng) {
    Tensor& w = ps.add(prefix + ".w", {in, out});
    Rng r = rng.split(prefix);
    r.fill_normal(w, 1.0 / std::sqrt(static_cast<double>(in)));
    ps.add(prefix + ".b", {out});
}

namespace {

void init_layer_norm(ParamStore& ps, const std::string& prefix, int hidden) {
    Tensor& g = ps.add(prefix + ".g", {hidden});
    for (double& v : g.data) v = 1.0;
    ps.add(prefix + ".b", {hidden});
}

void init_attn(ParamStore& ps, const std::string& prefix, int hidden, Rng& rng) {
    init_linear(ps, prefix + ".q", hidden, hidden, rng);
    init_linear(ps, prefix + ".k", hidden, hidden, rng);
    init_linear(ps, prefix + ".v", hidden, hidden, rng);
    init_linear(ps, prefix + ".o", hidden, hidden, rng);
}

NodeId linear(Tape& tape, const BoundParams& p, const std::string& prefix, NodeId x) {
    return tape.add_rowvec(tape.matmul(x, p.at(prefix + ".w")), p.at(prefix + ".b"));
}

NodeId norm(Tape& tape, const BoundParams& p, const std::string& prefix, NodeId x, double eps) {
    return tape.layer_norm(x, p.at(prefix + ".g"), p.at(prefix + ".b"), eps);
}

NodeId self_attn(Tape& tape, const BoundParams& p, const std::string& prefix, NodeId x,
                 const BatchSpec& spec, int heads, bool causal) {
    AttnSpec a;
    a.q = spec;
    a.kv = spec;
    a.heads = heads;
    a.causal = causal;
    NodeId mix = tape.attention(linear(tape, p, prefix + ".q", x), linear(tape, p, prefix + ".k", x),
                                linear(tape, p, prefix + ".v", x), a);
    return linear(tape, p, prefix + ".o", mix);
}

NodeId cross_attn(Tape& tape, const BoundParams& p, const std::string& prefix, NodeId x,
                  const BatchSpec& dec, NodeId enc_out, const BatchSpec& enc,
                  const std::vector<int>& kv_of, int heads) {
    AttnSpec a;
    a.q = dec;
    a.kv = enc;
    a.kv_of = kv_of;
    a.heads = heads;
    NodeId mix =
        tape.attention(linear(tape, p, prefix + ".q", x), linear(tape, p, prefix + ".k", enc_out),
                       linear(tape, p, prefix + ".v", enc_out), a);
    return linear(tape, p, prefix + ".o", mix);
}

NodeId ffn_block(Tape& tape, const BoundParams& p, const std::string& prefix, NodeId x) {
    return linear(tape, p, prefix + ".2", tape.relu(linear(tape, p, prefix + ".1", x)));
}

} // namespace

void init_stack(ParamStore& ps, const std::string& prefix, const StackDims& dims, bool cross,
                bool broadcast, Rng& rng) {
    dims.validate();
    for (int l = 0; l < dims.layers; ++l) {
        std::string lp = prefix + "." + std::to_string(l);
        init_attn(ps, lp + ".self", dims.hidden, rng);
        if (broadcast) {
            // Starts at the identity configuration so an untrained mix is a
            // no-op on the self-attention output; the conditioning path
            // (w1) grows in through its gradients. A random w2 here would
            // scramble the residual stream and stall early training.
            ps.add(lp + ".mix.w1", {dims.hidden, dims.hidden});
            Tensor& w2 = ps.add(lp + ".mix.w2", {dims.hidden, dims.hidden});
            for (int64_t i = 0; i < dims.hidden; ++i) w2.at(i, i) = 1.0;
            ps.add(lp + ".mix.b", {dims.hidden});
        }
        init_layer_norm(ps, lp + ".ln1", dims.hidden);
        if (cross) {
            init_attn(ps, lp + ".cross", dims.hidden, rng);
            init_layer_norm(ps, lp + ".ln_cross", dims.hidden);
        }
        init_linear(ps, lp + ".ffn.1", dims.hidden, dims.ffn, rng);
        init_linear(ps, lp + ".ffn.2", dims.ffn, dims.hidden, rng);
        init_layer_norm(ps, lp + ".ln2", dims.hidden);
    }
}

NodeId embed_tokens(Tape& tape, NodeId table, const std::vector<int>& ids, const BatchSpec& spec,
                    int hidden) {
    if (static_cast<int64_t>(ids.size()) != spec.total_rows())
        throw DimError("embed_tokens: ids vs batch spec");
    NodeId emb = tape.scale(tape.embedding(table, ids), std::sqrt(static_cast<double>(hidden)));
    Tensor pe_one = sinusoid_rows(spec.stride, hidden);
    Tensor pe({spec.total_rows(), hidden});
    for (int b = 0; b < spec.n_seq; ++b)
        std::copy(pe_one.data.begin(), pe_one.data.end(),
                  pe.data.begin() + static_cast<int64_t>(b) * spec.stride * hidden);
    return tape.add(emb, tape.constant(std::move(pe)));
}

NodeId broadcast_rows(Tape& tape, NodeId o, NodeId rhat, const BatchSpec& spec, NodeId w1, NodeId w2,
                      NodeId b) {
    const Tensor& vr = tape.value(rhat);
    if (vr.rows() != spec.n_seq) throw DimError("broadcast_rows: one conditioning row per sequence");
    std::vector<int> expand(static_cast<size_t>(spec.total_rows()));
    for (int s = 0; s < spec.n_seq; ++s)
        for (int tPos = 0; tPos < spec.stride; ++tPos)
            expand[static_cast<size_t>(s) * spec.stride + tPos] = s;
    NodeId r_rows = tape.gather_rows(rhat, std::move(expand));
    return tape.add_rowvec(tape.add(tape.matmul(r_rows, w1), tape.matmul(o, w2)), b);
}

NodeId encoder_stack(Tape& tape, const BoundParams& p, const std::string& prefix,
                     const StackDims& dims, NodeId x, const BatchSpec& spec) {
    for (int l = 0; l < dims.layers; ++l) {
        std::string lp = prefix + "." + std::to_string(l);
        NodeId a = self_attn(tape, p, lp + ".self", x, spec, dims.heads, /*causal=*/false);
        x = norm(tape, p, lp + ".ln1", tape.add(x, a), dims.ln_eps);
        NodeId f = ffn_block(tape, p, lp + ".ffn", x);
        x = norm(tape, p, lp + ".ln2", tape.add(x, f), dims.ln_eps);
    }
    return x;
}

NodeId decoder_stack(Tape& tape, const BoundParams& p, const std::string& prefix,
                     const StackDims& dims, NodeId x, const BatchSpec& dec, NodeId enc_out,
                     const BatchSpec& enc, const std::vector<int>& kv_of, NodeId rhat) {
    for (int l = 0; l < dims.layers; ++l) {
        std::string lp = prefix + "." + std::to_string(l);
        NodeId o = self_attn(tape, p, lp + ".self", x, dec, dims.heads, /*causal=*/true);
        if (rhat != kNoNode)
            o = broadcast_rows(tape, o, rhat, dec, p.at(lp + ".mix.w1"), p.at(lp + ".mix.w2"),
                               p.at(lp + ".mix.b"));
        x = norm(tape, p, lp + ".ln1", tape.add(x, o), dims.ln_eps);
        NodeId c = cross_attn(tape, p, lp + ".cross", x, dec, enc_out, enc, kv_of, dims.heads);
        x = norm(tape, p, lp + ".ln_cross", tape.add(x, c), dims.ln_eps);
        NodeId f = ffn_block(tape, p, lp + ".ffn", x);
        x = norm(tape, p, lp + ".ln2", tape.add(x, f), dims.ln_eps);
    }
    return x;
}

void set_broadcast_identity(ParamStore& ps, const std::string& prefix, int layers) {
    for (int l = 0; l < layers; ++l) {
        std::string lp = prefix + "." + std::to_string(l) + ".mix";
        Tensor& w1 = ps.at(lp + ".w1");
        for (double& v : w1.data) v = 0.0;
        Tensor& w2 = ps.at(lp + ".w2");
        int64_t n = w2.shape[0];
        for (double& v : w2.data) v = 0.0;
        for (int64_t i = 0; i < n; ++i) w2.at(i, i) = 1.0;
        Tensor& b = ps.at(lp + ".b");
        for (double& v : b.data) v = 0.0;
    }
}

bool is_broadcast_param(const std::string& name) {
    return name.find(".mix.") != std::string::npos;
}

} // namespace csanmt
