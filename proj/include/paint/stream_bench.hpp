#pragma once

#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "paint/adapter.hpp"
#include "paint/encoder.hpp"
#include "paint/image.hpp"

namespace paint {

// Desk-scale benchmark: a synthetic 10-class grating dataset, five corruption
// families with five severity levels each, scenario builders for sequential /
// shuffled / gradual domain streams, source pre-training, the baselines, and
// run-level metrics including anti-forgetting probes.

// ---- dataset ----

struct LabeledImage {
    Image image;
    int label = 0;
};

inline constexpr int kNumClasses = 10;

// Class k is a sinusoidal grating: frequency 2 (k < 5) or 5 (k >= 5) cycles
// per image, at one of five orientations per frequency; phase, amplitude and
// a small orientation wobble are drawn from rng.
Image make_clean_sample(int label, std::mt19937_64& rng);

// Balanced dataset (labels cycle 0..9), fully determined by (count, seed).
std::vector<LabeledImage> make_dataset(int count, unsigned long long seed);

// ---- corruptions ----

enum class CorruptionKind { gaussian_noise, box_blur, contrast_reduction, pixelate, occlusion };

const std::vector<CorruptionKind>& all_corruption_kinds();
std::string to_string(CorruptionKind kind);
CorruptionKind corruption_from_string(const std::string& name);

struct DomainSpec {
    CorruptionKind kind = CorruptionKind::gaussian_noise;
    int severity = 1;  // 1..5; severity 0 means the clean source domain

    std::string id() const;  // e.g. "gaussian-noise@3"; "clean" for severity 0
};

// Mean box filter with edge replication; size must be odd (1 = identity).
Image box_blur(const Image& img, int size);

// Replaces each block x block cell with its mean.
Image block_average(const Image& img, int block);

// Severity-monotone distortion: for a fixed kind, image, and rng seed, the
// mean squared distortion strictly increases with severity.  Output stays in
// [0, 1].  Severity 0 is rejected here (clean batches skip corruption).
Image corrupt(const Image& img, const DomainSpec& spec, std::mt19937_64& rng);

// ---- scenarios ----

struct ScenarioSegment {
    DomainSpec domain;
    int num_batches = 1;
};

struct Scenario {
    std::vector<ScenarioSegment> segments;
};

// One segment per corruption kind, all at severity 5, canonical kind order.
Scenario build_severity5_scenario(int batches_per_domain);

// Same domains with the kind order shuffled by the seed.
Scenario build_shuffled_scenario(int batches_per_domain, unsigned long long seed);

// Per kind, severity ramps 1,2,3,4,5,4,3,2,1 (nine segments per kind).
Scenario build_gradual_scenario(const std::vector<CorruptionKind>& kinds,
                                int batches_per_severity);

// Single clean-domain stream (severity 0).
Scenario build_clean_scenario(int num_batches);

nlohmann::json scenario_to_json(const Scenario& s);
Scenario scenario_from_json(const nlohmann::json& j);

// i.i.d. labeled batch from one domain; the adapter receives images only.
struct StreamBatch {
    std::vector<Image> images;
    std::vector<int> labels;
};

StreamBatch make_stream_batch(const DomainSpec& domain, int batch_size, std::mt19937_64& rng);

// ---- source pre-training ----

struct PretrainConfig {
    int train_count = 768;
    int heldout_count = 320;
    int epochs = 16;
    int batch_size = 64;
    double lr = 2e-3;  // Adam
    unsigned long long seed = 0;
    double min_accuracy = 0.90;  // calibration gate; set to 0 to disable
};

struct PretrainResult {
    EncoderParams params;
    double clean_accuracy = 0.0;
};

// Supervised cross-entropy training of the full encoder on clean data.
// Aborts with a calibration error if held-out accuracy misses the gate.
PretrainResult pretrain_source(const EncoderArch& arch, const PretrainConfig& config);

// Deterministic held-out set matching a pretrain config.
std::vector<LabeledImage> make_heldout_set(const PretrainConfig& config);

// Prompt-free argmax accuracy of params on a labeled set.
double evaluate_accuracy(const EncoderParams& params, const std::vector<LabeledImage>& data);

// ---- method runner ----

enum class Method {
    paint,
    source_frozen,
    entropy_only,
    paint_no_prompt,
    paint_no_encoder,
    paint_oracle,
};

std::string to_string(Method m);
Method method_from_string(const std::string& name);

struct BatchRecord {
    int batch_index = 0;
    std::string domain_id;
    BatchOutcome outcome;
    double accuracy = 0.0;
    std::optional<double> source_probe;  // probe taken right after this batch
};

struct DomainResult {
    std::string domain_id;
    int sample_count = 0;
    int correct = 0;
    double accuracy = 0.0;
};

struct RunMetrics {
    std::vector<BatchRecord> batches;
    std::vector<DomainResult> per_domain;  // distinct domains, first-appearance order
    double average_accuracy = 0.0;         // total correct / total samples
    std::optional<double> matching_accuracy;  // paint-family only
    int final_prompt_count = 0;
    double pre_adaptation_probe = 0.0;
    std::vector<double> source_probes;
    std::optional<double> final_source_probe;
    long long sgd_calls = 0;
};

struct RunOptions {
    Method method = Method::paint;
    Scenario scenario;
    AdaptationConfig config;
    int probe_every = 0;  // 0 = probe after each segment; n > 0 = every n batches
    unsigned long long stream_seed = 1000;
};

// Read-only source-accuracy probe of the live model: prompt selection runs in
// a cloned memory with a private rng, so state is never perturbed.  An empty
// memory probes prompt-free.
double probe_source_accuracy(const AdapterState& state, const std::vector<LabeledImage>& held_out,
                             const AdaptationConfig& config);

RunMetrics run_method(const EncoderParams& source, const RunOptions& options,
                      const std::vector<LabeledImage>& held_out_clean);

}  // namespace paint
