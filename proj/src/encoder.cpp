#include "paint/encoder.hpp"

#include <cmath>
#include <stdexcept>

namespace paint {

void EncoderArch::validate() const {
    if (image_size <= 0 || patch_size <= 0 || channels <= 0)
        throw std::invalid_argument("encoder arch: sizes must be positive");
    if (image_size % patch_size != 0)
        throw std::invalid_argument("encoder arch: image size " + std::to_string(image_size) +
                                    " not divisible by patch size " + std::to_string(patch_size));
    if (dim <= 0 || heads <= 0 || dim % heads != 0)
        throw std::invalid_argument("encoder arch: dim must be a positive multiple of heads");
    if (mlp_hidden <= 0 || num_blocks <= 0 || num_classes <= 1)
        throw std::invalid_argument("encoder arch: invalid block/head configuration");
}

EncoderParams EncoderParams::random_init(const EncoderArch& arch, std::mt19937_64& rng) {
    arch.validate();
    std::normal_distribution<double> dist(0.0, 0.02);
    auto randn = [&](int r, int c) {
        Tensor t(r, c);
        for (auto& v : t.data) v = dist(rng);
        return t;
    };

    EncoderParams p;
    p.arch = arch;
    p.patch_projection = randn(arch.patch_dim(), arch.dim);
    p.class_token = randn(1, arch.dim);
    p.positional = randn(1 + arch.num_patches(), arch.dim);
    p.blocks.resize(arch.num_blocks);
    for (auto& blk : p.blocks) {
        blk.ln1_gain = Tensor(1, arch.dim, 1.0);
        blk.ln1_bias = Tensor(1, arch.dim, 0.0);
        for (int h = 0; h < arch.heads; ++h) {
            blk.wq.push_back(randn(arch.dim, arch.head_dim()));
            blk.wk.push_back(randn(arch.dim, arch.head_dim()));
            blk.wv.push_back(randn(arch.dim, arch.head_dim()));
            blk.wo.push_back(randn(arch.head_dim(), arch.dim));
        }
        blk.ln2_gain = Tensor(1, arch.dim, 1.0);
        blk.ln2_bias = Tensor(1, arch.dim, 0.0);
        blk.mlp_w1 = randn(arch.dim, arch.mlp_hidden);
        blk.mlp_b1 = Tensor(1, arch.mlp_hidden, 0.0);
        blk.mlp_w2 = randn(arch.mlp_hidden, arch.dim);
        blk.mlp_b2 = Tensor(1, arch.dim, 0.0);
    }
    p.head_weight = randn(arch.dim, arch.num_classes);
    p.head_bias = Tensor(1, arch.num_classes, 0.0);
    p.shallow_blocks = std::min(3, arch.num_blocks);
    return p;
}

std::vector<NamedTensor> params_to_tensors(const EncoderParams& p) {
    std::vector<NamedTensor> out;
    visit_params(p, [&](const std::string& name, const Tensor& t, int) {
        out.push_back({name, t});
    });
    return out;
}

void tensors_to_params(const LoadedCheckpoint& ck, EncoderParams& p) {
    visit_params(p, [&](const std::string& name, Tensor& t, int) {
        const Tensor& src = ck.find(name);
        if (src.n_rows != t.n_rows || src.n_cols != t.n_cols)
            throw std::runtime_error("checkpoint: shape mismatch for " + name + ": expected " +
                                     t.shape_str() + ", found " + src.shape_str());
        t = src;
    });
}

std::uint64_t params_fingerprint(const EncoderParams& p) {
    return fingerprint(params_to_tensors(p));
}

void save_encoder(const std::filesystem::path& stem, const EncoderParams& p,
                  const nlohmann::json& extra_metadata) {
    nlohmann::json meta = extra_metadata;
    meta["kind"] = "encoder";
    meta["arch"] = {{"image_size", p.arch.image_size}, {"patch_size", p.arch.patch_size},
                    {"channels", p.arch.channels},     {"dim", p.arch.dim},
                    {"heads", p.arch.heads},           {"mlp_hidden", p.arch.mlp_hidden},
                    {"num_blocks", p.arch.num_blocks}, {"num_classes", p.arch.num_classes}};
    meta["shallow_blocks"] = p.shallow_blocks;
    save_tensors(stem, meta, params_to_tensors(p));
}

EncoderParams load_encoder(const std::filesystem::path& stem) {
    LoadedCheckpoint ck = load_tensors(stem);
    if (ck.metadata.value("kind", "") != std::string("encoder"))
        throw std::runtime_error("checkpoint: not an encoder checkpoint: " + stem.string());
    const auto& a = ck.metadata.at("arch");
    EncoderArch arch;
    arch.image_size = a.at("image_size").get<int>();
    arch.patch_size = a.at("patch_size").get<int>();
    arch.channels = a.at("channels").get<int>();
    arch.dim = a.at("dim").get<int>();
    arch.heads = a.at("heads").get<int>();
    arch.mlp_hidden = a.at("mlp_hidden").get<int>();
    arch.num_blocks = a.at("num_blocks").get<int>();
    arch.num_classes = a.at("num_classes").get<int>();

    std::mt19937_64 rng(0);
    EncoderParams p = EncoderParams::random_init(arch, rng);
    p.shallow_blocks = ck.metadata.at("shallow_blocks").get<int>();
    tensors_to_params(ck, p);
    return p;
}

Tensor flatten_patches(const Image& img, const EncoderArch& arch) {
    if (img.height != arch.image_size || img.width != arch.image_size ||
        img.channels != arch.channels)
        throw std::invalid_argument("flatten_patches: image " + std::to_string(img.height) + "x" +
                                    std::to_string(img.width) + "x" + std::to_string(img.channels) +
                                    " does not match the architecture");
    for (double v : img.data)
        if (!(v >= 0.0 && v <= 1.0))
            throw std::invalid_argument("flatten_patches: pixel values must lie in [0, 1]");

    const int grid = arch.patches_per_side();
    const int ps = arch.patch_size;
    Tensor out(arch.num_patches(), arch.patch_dim());
    for (int py = 0; py < grid; ++py)
        for (int px = 0; px < grid; ++px) {
            const int row = py * grid + px;
            for (int y = 0; y < ps; ++y)
                for (int x = 0; x < ps; ++x)
                    for (int c = 0; c < arch.channels; ++c)
                        out.at(row, (y * ps + x) * arch.channels + c) =
                            img.at(py * ps + y, px * ps + x, c);
        }
    return out;
}

Tensor embed_patches(const Image& img, const EncoderParams& p) {
    return kernels::matmul(flatten_patches(img, p.arch), p.patch_projection);
}

EncoderVars lift_params(Graph& g, const EncoderParams& p, TrainScope scope) {
    EncoderVars vars;
    auto lift = [&](const Tensor& t, int block_index) {
        bool train = false;
        if (scope == TrainScope::all) train = true;
        if (scope == TrainScope::adaptation)
            train = block_index >= 0 && block_index < p.shallow_blocks;
        Var v = g.leaf(t, train);
        vars.flat.push_back(v);
        vars.trainable.push_back(train);
        return v;
    };
    // Keep in lockstep with visit_params: same tensors, same order.
    vars.patch_projection = lift(p.patch_projection, -1);
    vars.class_token = lift(p.class_token, -1);
    vars.positional = lift(p.positional, -1);
    for (int b = 0; b < static_cast<int>(p.blocks.size()); ++b) {
        const auto& blk = p.blocks[b];
        BlockVars bv;
        bv.ln1_gain = lift(blk.ln1_gain, b);
        bv.ln1_bias = lift(blk.ln1_bias, b);
        for (int h = 0; h < static_cast<int>(blk.wq.size()); ++h) {
            bv.wq.push_back(lift(blk.wq[h], b));
            bv.wk.push_back(lift(blk.wk[h], b));
            bv.wv.push_back(lift(blk.wv[h], b));
            bv.wo.push_back(lift(blk.wo[h], b));
        }
        bv.ln2_gain = lift(blk.ln2_gain, b);
        bv.ln2_bias = lift(blk.ln2_bias, b);
        bv.mlp_w1 = lift(blk.mlp_w1, b);
        bv.mlp_b1 = lift(blk.mlp_b1, b);
        bv.mlp_w2 = lift(blk.mlp_w2, b);
        bv.mlp_b2 = lift(blk.mlp_b2, b);
        vars.blocks.push_back(std::move(bv));
    }
    vars.head_weight = lift(p.head_weight, -1);
    vars.head_bias = lift(p.head_bias, -1);
    return vars;
}

namespace {

// y = x + attn(ln(x)); attention output is assembled as a sum of per-head
// projections, which avoids needing a feature-axis concat primitive.
Var attention_block(Graph& g, const BlockVars& bv, const EncoderArch& arch, Var x) {
    Var h = g.layer_norm(x, bv.ln1_gain, bv.ln1_bias);
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(arch.head_dim()));
    Var acc{-1};
    for (int i = 0; i < arch.heads; ++i) {
        Var q = g.matmul(h, bv.wq[i]);
        Var k = g.matmul(h, bv.wk[i]);
        Var v = g.matmul(h, bv.wv[i]);
        Var scores = g.scale(g.matmul_nt(q, k), inv_sqrt);
        Var attn = g.softmax(scores);
        Var proj = g.matmul(g.matmul(attn, v), bv.wo[i]);
        acc = (i == 0) ? proj : g.add(acc, proj);
    }
    return g.add(x, acc);
}

Var mlp_block(Graph& g, const BlockVars& bv, Var x, Var ones_col) {
    Var h = g.layer_norm(x, bv.ln2_gain, bv.ln2_bias);
    Var pre = g.add(g.matmul(h, bv.mlp_w1), g.matmul(ones_col, bv.mlp_b1));
    Var post = g.add(g.matmul(g.gelu(pre), bv.mlp_w2), g.matmul(ones_col, bv.mlp_b2));
    return g.add(x, post);
}

}  // namespace

ForwardResult forward_from_embedding(Graph& g, const EncoderVars& vars, const EncoderArch& arch,
                                     Var embedding, std::optional<Var> prompt) {
    const Tensor& emb = g.value(embedding);
    if (emb.n_rows != arch.num_patches() || emb.n_cols != arch.dim)
        throw std::invalid_argument("forward: embedding shape " + emb.shape_str() +
                                    " does not match the architecture");
    int prompt_len = 0;
    if (prompt) {
        const Tensor& pt = g.value(*prompt);
        if (pt.n_cols != arch.dim)
            throw std::invalid_argument("forward: prompt width " + pt.shape_str() +
                                        " does not match embedding dim");
        prompt_len = pt.n_rows;
        if (prompt_len == 0) prompt = std::nullopt;  // empty prompt == no prompt
    }

    Var cls = g.add(vars.class_token, g.slice(vars.positional, 0, 1));
    Var patches = g.add(embedding, g.slice(vars.positional, 1, 1 + arch.num_patches()));
    Var seq = prompt ? g.concat({cls, *prompt, patches}) : g.concat({cls, patches});

    const int seq_len = 1 + prompt_len + arch.num_patches();
    Var ones_col = g.leaf(Tensor(seq_len, 1, 1.0), false);

    for (const auto& bv : vars.blocks) {
        seq = attention_block(g, bv, arch, seq);
        seq = mlp_block(g, bv, seq, ones_col);
    }

    ForwardResult out;
    out.features = g.slice(seq, 0, 1);
    Var logits = g.add(g.matmul(out.features, vars.head_weight), vars.head_bias);
    out.probs = g.softmax(logits);
    return out;
}

ForwardResult forward_from_patches(Graph& g, const EncoderVars& vars, const EncoderArch& arch,
                                   const Tensor& raw_patches, std::optional<Var> prompt) {
    Var raw = g.leaf(raw_patches, false);
    Var embedding = g.matmul(raw, vars.patch_projection);
    return forward_from_embedding(g, vars, arch, embedding, prompt);
}

Prediction forward_prompted(const EncoderParams& p, const Tensor& embedding,
                            const std::optional<Tensor>& prompt) {
    Graph g;
    EncoderVars vars = lift_params(g, p, TrainScope::none);
    Var emb = g.leaf(embedding, false);
    std::optional<Var> pv;
    if (prompt && prompt->n_rows > 0) pv = g.leaf(*prompt, false);
    ForwardResult r = forward_from_embedding(g, vars, p.arch, emb, pv);
    return {g.value(r.features), g.value(r.probs)};
}

Tensor extract_query(const EncoderParams& p, const Tensor& embedding) {
    return forward_prompted(p, embedding, std::nullopt).features;
}

}  // namespace paint
