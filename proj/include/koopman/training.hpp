#pragma once

#include <cstdint>
#include <vector>

#include "koopman/datagen.hpp"
#include "koopman/lifting.hpp"
#include "koopman/numerics.hpp"

namespace koopman {

struct LossWeights {
    double alpha1 = 1.0;   // state prediction, forward + backward
    double alpha2 = 0.5;   // lifted prediction, forward + backward
    double alpha3 = 0.01;  // forward/backward consistency
    double gamma1 = 0.0;   // l1 on encoder weights
    double gamma2 = 0.0;   // squared l2 on encoder weights

    void validate() const;
};

struct LossTerms {
    double fpred = 0.0;
    double flift = 0.0;
    double bpred = 0.0;
    double blift = 0.0;
    double con = 0.0;
    double reg = 0.0;  // already weighted by gamma1, gamma2

    [[nodiscard]] double total(const LossWeights& w) const;
};

// Encoder plus the forward (A_f, B_f) and backward (A_b, B_b) linear layers.
struct TrainState {
    EncoderParams encoder;
    Mat a_f, b_f;
    Mat a_b, b_b;
    Vec adam_m, adam_v;
    std::int64_t step = 0;

    // Encoder from EncoderParams::init, operators A = I and B = 0.
    static TrainState init(const std::vector<int>& encoder_dims, int input_dim, std::uint64_t seed);

    [[nodiscard]] int state_dim() const { return encoder.input_dim(); }
    [[nodiscard]] int lifted_dim() const { return encoder.input_dim() + encoder.output_dim(); }
    [[nodiscard]] int input_dim() const { return static_cast<int>(b_f.cols()); }
    [[nodiscard]] Eigen::Index parameter_count() const;

    void validate() const;
};

// Flat parameter vector: encoder layers (weight column-major, then bias),
// followed by A_f, B_f, A_b, B_b.
Vec pack_parameters(const TrainState& st);
void unpack_parameters(const Vec& flat, TrainState& st);

LossTerms loss_terms(const TripletBatch& batch, const TrainState& st, const LossWeights& w);
double total_loss(const TripletBatch& batch, const TrainState& st, const LossWeights& w);

struct LossEval {
    LossTerms terms;
    double total = 0.0;
    Vec grad;  // same layout as pack_parameters
};

// Exact gradient of total_loss with respect to every parameter.
LossEval loss_and_grad(const TripletBatch& batch, const TrainState& st, const LossWeights& w);

struct AdamSettings {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// One Adam update on all parameters. clip_norm <= 0 disables global-norm
// clipping. Throws NonFiniteGradient.
LossEval grad_step(const TripletBatch& batch, TrainState& st, const LossWeights& w, double lr,
                   double clip_norm = 10.0, const AdamSettings& adam = {});

struct TrainConfig {
    int epochs = 600;
    int batch_size = 256;
    double lr = 1e-3;
    double lr_decay = 0.5;
    int decay_every = 200;
    double clip_norm = 10.0;
    // Exact block-coordinate sweeps over the linear layers after the last
    // epoch, encoder frozen. 0 keeps the stochastic-gradient values.
    int polish_sweeps = 10;
    LossWeights weights;
    std::vector<int> hidden{20, 20, 20};
    int encoder_output = 10;
    std::uint64_t seed = 0;

    void validate() const;
};

struct EpochLoss {
    int epoch = 0;
    LossTerms terms;
    double total = 0.0;
};

struct TrainResult {
    TrainState state;
    std::vector<EpochLoss> history;
};

/// Minimises total_loss over (A_f, B_f) and then (A_b, B_b) in turn with the
/// encoder held fixed, `sweeps` times. Each half-step is a linear least-squares
/// problem (data terms plus the consistency coupling), so the loss never
/// increases. Returns false, leaving st untouched, if a normal matrix is not
/// positive definite.
bool polish_linear_layers(const TripletBatch& data, TrainState& st, const LossWeights& w, int sweeps);

// Mini-batch Adam over shuffled triplets. The encoder standardisation is set
// from the mean and std of the training states.
TrainResult train(const TripletBatch& dataset, const TrainConfig& config);

}  // namespace koopman
