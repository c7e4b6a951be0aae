#pragma once

#include <optional>
#include <random>
#include <string>
#include <vector>

#include "paint/autodiff.hpp"
#include "paint/checkpoint.hpp"
#include "paint/image.hpp"
#include "paint/tensor.hpp"

namespace paint {

// Desk-scale vision transformer: patchify -> linear projection -> prepend a
// class token (and optionally prompt rows) -> pre-norm attention/MLP blocks
// -> linear head on the class token.  Every forward pass, training or not,
// is built on the same autodiff graph code so the two can never drift.

struct EncoderArch {
    int image_size = 16;
    int patch_size = 4;
    int channels = 1;
    int dim = 64;        // embedding width, shared by features
    int heads = 4;
    int mlp_hidden = 128;
    int num_blocks = 4;
    int num_classes = 10;

    int patches_per_side() const { return image_size / patch_size; }
    int num_patches() const { return patches_per_side() * patches_per_side(); }
    int patch_dim() const { return patch_size * patch_size * channels; }
    int head_dim() const { return dim / heads; }

    void validate() const;
};

struct BlockParams {
    Tensor ln1_gain, ln1_bias;
    std::vector<Tensor> wq, wk, wv;  // per head: [dim, head_dim]
    std::vector<Tensor> wo;          // per head: [head_dim, dim]
    Tensor ln2_gain, ln2_bias;
    Tensor mlp_w1, mlp_b1;  // [dim, mlp_hidden], [1, mlp_hidden]
    Tensor mlp_w2, mlp_b2;  // [mlp_hidden, dim], [1, dim]
};

struct EncoderParams {
    EncoderArch arch;
    Tensor patch_projection;  // [patch_dim, dim]
    Tensor class_token;       // [1, dim]
    Tensor positional;        // [1 + num_patches, dim]; prompts get no positional term
    std::vector<BlockParams> blocks;
    Tensor head_weight;  // [dim, num_classes]
    Tensor head_bias;    // [1, num_classes]
    int shallow_blocks = 3;  // adaptation touches only blocks [0, shallow_blocks)

    static EncoderParams random_init(const EncoderArch& arch, std::mt19937_64& rng);
};

// Visits every parameter tensor in a fixed canonical order.  block_index is
// -1 for tensors outside the transformer blocks.  The same order is used by
// graph lifting, SGD, and checkpointing.
template <class Params, class Fn>
void visit_params(Params& p, Fn&& fn) {
    fn("patch_projection", p.patch_projection, -1);
    fn("class_token", p.class_token, -1);
    fn("positional", p.positional, -1);
    for (int b = 0; b < static_cast<int>(p.blocks.size()); ++b) {
        auto& blk = p.blocks[b];
        const std::string prefix = "blocks." + std::to_string(b) + ".";
        fn(prefix + "ln1_gain", blk.ln1_gain, b);
        fn(prefix + "ln1_bias", blk.ln1_bias, b);
        for (int h = 0; h < static_cast<int>(blk.wq.size()); ++h) {
            const std::string hs = std::to_string(h);
            fn(prefix + "wq." + hs, blk.wq[h], b);
            fn(prefix + "wk." + hs, blk.wk[h], b);
            fn(prefix + "wv." + hs, blk.wv[h], b);
            fn(prefix + "wo." + hs, blk.wo[h], b);
        }
        fn(prefix + "ln2_gain", blk.ln2_gain, b);
        fn(prefix + "ln2_bias", blk.ln2_bias, b);
        fn(prefix + "mlp_w1", blk.mlp_w1, b);
        fn(prefix + "mlp_b1", blk.mlp_b1, b);
        fn(prefix + "mlp_w2", blk.mlp_w2, b);
        fn(prefix + "mlp_b2", blk.mlp_b2, b);
    }
    fn("head_weight", p.head_weight, -1);
    fn("head_bias", p.head_bias, -1);
}

std::vector<NamedTensor> params_to_tensors(const EncoderParams& p);
void tensors_to_params(const LoadedCheckpoint& ck, EncoderParams& p);
std::uint64_t params_fingerprint(const EncoderParams& p);

void save_encoder(const std::filesystem::path& stem, const EncoderParams& p,
                  const nlohmann::json& extra_metadata = nlohmann::json::object());
EncoderParams load_encoder(const std::filesystem::path& stem);

// ---- patch embedding ----

// Flattens an image into [num_patches, patch_dim] rows (patch-grid row-major,
// pixels row-major within a patch).  Rejects images whose size does not match
// the architecture or whose pixels leave [0, 1].
Tensor flatten_patches(const Image& img, const EncoderArch& arch);

// Projected patch tokens [num_patches, dim] (no positional term yet).
Tensor embed_patches(const Image& img, const EncoderParams& p);

// ---- graph forward ----

// Which parameters become trainable graph leaves.
enum class TrainScope {
    none,        // pure inference
    adaptation,  // blocks [0, shallow_blocks) only; everything else frozen
    all,         // pretraining
};

struct BlockVars {
    Var ln1_gain, ln1_bias;
    std::vector<Var> wq, wk, wv, wo;
    Var ln2_gain, ln2_bias;
    Var mlp_w1, mlp_b1, mlp_w2, mlp_b2;
};

struct EncoderVars {
    Var patch_projection, class_token, positional;
    std::vector<BlockVars> blocks;
    Var head_weight, head_bias;
    // Flat view in visit_params order, paired with trainability; SGD zips
    // this with visit_params over the concrete EncoderParams.
    std::vector<Var> flat;
    std::vector<bool> trainable;
};

EncoderVars lift_params(Graph& g, const EncoderParams& p, TrainScope scope);

struct ForwardResult {
    Var features;  // [1, dim] class-token output of the last block
    Var probs;     // [1, num_classes]
};

// Core forward from an embedding node [num_patches, dim] already in the
// graph; prompt (if present) is a [prompt_len, dim] node spliced between the
// class token and the patches.
ForwardResult forward_from_embedding(Graph& g, const EncoderVars& vars, const EncoderArch& arch,
                                     Var embedding, std::optional<Var> prompt);

// Convenience: embed raw flattened patches through the (possibly trainable)
// projection, then run the blocks.
ForwardResult forward_from_patches(Graph& g, const EncoderVars& vars, const EncoderArch& arch,
                                   const Tensor& raw_patches, std::optional<Var> prompt);

// ---- pure inference wrappers (build a throwaway graph internally) ----

struct Prediction {
    Tensor features;  // [1, dim]
    Tensor probs;     // [1, num_classes]
};

// embedding: [num_patches, dim]; prompt: empty optional or [prompt_len, dim].
Prediction forward_prompted(const EncoderParams& p, const Tensor& embedding,
                            const std::optional<Tensor>& prompt);

// Prompt-free class-token features used as the retrieval query.
Tensor extract_query(const EncoderParams& p, const Tensor& embedding);

// Deep copy of the weights for the frozen source snapshot.
inline EncoderParams snapshot_source(const EncoderParams& p) { return p; }

}  // namespace paint
