// Variational LSTM with a vine-copula posterior over the latent dimensions:
// LSTM cell, encoder/decoder/prior heads, reparameterized time-step-wise
// ELBO, direction cross-entropy, the combined loss, the two-step training
// procedure, forecasting, and bit-exact checkpoints.
//
// All stochastic draws go through the deterministic Rng; two runs with the
// same seed produce bit-identical loss traces.
#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "wpvc/diffcore.hpp"
#include "wpvc/matrix.hpp"
#include "wpvc/paircopula.hpp"
#include "wpvc/vine.hpp"

namespace wpvc::vlstm {

enum class Ablation { Wpvc, MeanField, PlainLstm };

const char* ablation_name(Ablation a);
Ablation ablation_from_name(const std::string& name);

// What the latent vine couples: the d_z latent dimensions at each time step
// (default), or fixed-length blocks of time steps within each dimension.
enum class LatentCopula { Dimensions, Time };

const char* latent_copula_name(LatentCopula c);
LatentCopula latent_copula_from_name(const std::string& name);

struct Dimensions {
    int d_x = 0;     // instruments
    int d_h = 100;   // LSTM units
    int d_z = 10;    // latent dimensions
    int d_feat = 10; // width of the g_x / g_z / g_y feature MLPs
};

struct TrainingConfig {
    int epochs = 500;
    int batch_size = 16; // windows per gradient step
    double learning_rate = 5e-4;
    std::uint64_t seed = 42;
    int checkpoint_every = 10;
    double loss_threshold = -1e300; // delta: stop once the loss drops below
    int refresh_interval = 10;      // epochs between latent-vine refreshes
    Ablation ablation = Ablation::Wpvc;
    int window = 30; // sequence window length, stride 1
    Dimensions dims;
    double grad_clip = 5.0;
    double rho_trun = 0.05;
    LatentCopula latent_copula = LatentCopula::Dimensions;
    int latent_copula_window = 10; // block length for the time-spanning variant
    std::vector<copula::CopulaFamily> copula_candidates{
        copula::CopulaFamily::Independence, copula::CopulaFamily::Gaussian,
        copula::CopulaFamily::StudentT,     copula::CopulaFamily::Clayton,
        copula::CopulaFamily::Gumbel,       copula::CopulaFamily::Frank};
    int max_windows_per_epoch = 256; // deterministic subsample; 0 = all
};

// Named views into one flat parameter vector.
struct ParamStore {
    struct Tensor {
        std::string name;
        std::vector<int> shape;
        std::size_t offset = 0;
        std::size_t size = 0;
    };
    std::vector<double> values;
    std::vector<Tensor> tensors;

    std::size_t add(const std::string& name, std::vector<int> shape);
    const Tensor& find(const std::string& name) const;
    double* data(const std::string& name);
    const double* data(const std::string& name) const;
};

struct LstmState {
    std::vector<double> h;
    std::vector<double> c;
};

// Per-window posterior material: one row per time step.
struct LatentPosterior {
    Matrix mu;    // W x d_z
    Matrix sigma; // W x d_z
    Matrix z;     // W x d_z
    Matrix u;     // W x d_z, u = Phi((z - mu) / sigma)
};

class Model {
  public:
    Model() = default;
    Model(Dimensions dims, Ablation ablation, std::uint64_t seed);

    Dimensions dims;
    Ablation ablation = Ablation::Wpvc;
    ParamStore params;
    vine::VineStructure latent_vine; // empty => fully mean-field
    bool has_vine = false;
    bool trained = false;
    LatentCopula latent_copula = LatentCopula::Dimensions;
    int latent_copula_window = 10;

    int param_count() const { return static_cast<int>(params.values.size()); }
};

// ---- standalone operations (double path, used by tests and forecasting) ----

// One LSTM cell update, exactly f,i,o = sigma(Wx+Uh+b), chat = tanh(.),
// c = i*chat + f*c_prev, h = o*tanh(c).
LstmState lstm_step(const Model& m, std::span<const double> x_concat, const LstmState& prev);

// Posterior parameters (mu, sigma) from g_x(x_t) and h_{t-1}.
void encode(const Model& m, std::span<const double> x_t, std::span<const double> h_prev,
            std::vector<double>& mu, std::vector<double>& sigma);

// z = mu + sigma * eps.
std::vector<double> reparameterize(std::span<const double> mu, std::span<const double> sigma,
                                   std::span<const double> eps);

// Prior parameters p(z_t | .) from the previous hidden state.
void prior_params(const Model& m, const LstmState& state, std::vector<double>& mu,
                  std::vector<double>& sigma);

// Decoder likelihood parameters p(x_t | z_t, h_{t-1}).
void decode(const Model& m, std::span<const double> z, const LstmState& state,
            std::vector<double>& mu, std::vector<double>& sigma);

// Direction-head up probabilities from the previous hidden state.
std::vector<double> direction_probabilities(const Model& m, const LstmState& state);

// One recurrence step h_t = f(g_x(x_t), g_z(z_t), h_{t-1}).
LstmState advance_state(const Model& m, std::span<const double> x_t, std::span<const double> z_t,
                        const LstmState& state);

// Sum over steps/dims of the Gaussian log density of z under (mu, sigma).
double mean_field_log_q(const LatentPosterior& post);

// Joint posterior log density: log c(u; eta) plus the mean-field term.
double copula_log_posterior(const LatentPosterior& post, const vine::VineStructure& v);

// Closed-form KL(N(mu_q, sigma_q^2) || N(mu_p, sigma_p^2)), one dimension.
double gaussian_kl(double mu_q, double sigma_q, double mu_p, double sigma_p);

// Binary cross-entropy sum over steps: -sum y log p + (1-y) log(1-p).
double prediction_loss(std::span<const int> y_up, std::span<const double> p_up);

// L_VLSTM = L_P - L_VAE.
double total_loss(double elbo_value, double pred_loss);

// ---- window graph (tape path, used by training and the gradient suite) ----

struct WindowGraph {
    ad::Var pred_loss; // L_P
    ad::Var neg_elbo;  // -L_VAE (mean-field ELBO plus copula term)
    ad::Var total;     // L_P - L_VAE
    std::vector<ad::Var> param_leaves;
    std::vector<ad::Var> eta_leaves;
};

// Builds the full loss graph of one window. x_window is W x d_x; eps is
// W x d_z (ignored for the plain-LSTM ablation).
WindowGraph build_window_graph(const Model& m, ad::Tape& tape, const Matrix& x_window,
                               const Matrix& eps);

struct LossBreakdown {
    double pred = 0.0;
    double neg_elbo = 0.0;
    double total = 0.0;
};

LossBreakdown window_loss(const Model& m, const Matrix& x_window, const Matrix& eps);

// d total / d (params, eta) for one window; the finite-difference suite
// checks every entry.
void window_loss_gradient(const Model& m, const Matrix& x_window, const Matrix& eps,
                          std::vector<double>& param_grad, std::vector<double>& eta_grad);

// ---- training and forecasting ----

struct TraceRow {
    int epoch = 0;
    double pred_loss = 0.0;
    double neg_elbo = 0.0;
    double total = 0.0;
};

struct TrainResult {
    Model model;
    std::vector<TraceRow> trace;
    bool converged = false; // loss threshold reached
    bool diverged = false;
    int epochs_run = 0;
};

using CheckpointFn = std::function<void(int epoch, const Model&)>;

// Two-step training: per batch, gradient steps on the variational
// parameters (from -L_VAE), on the copula parameters eta (same objective),
// and on the prediction head (from L_P, last); the latent vine is
// re-estimated every refresh_interval epochs from pooled standardized
// residuals. Divergence aborts with the last good model checkpointed.
TrainResult train(const Matrix& returns, const TrainingConfig& cfg,
                  const CheckpointFn& checkpoint = nullptr);

struct ForecastStep {
    std::vector<double> mu;      // one-step-ahead predictive mean per instrument
    std::vector<double> sigma;   // predictive standard deviation
    std::vector<double> up_prob; // direction-head probability of an up move
};

// One-step-ahead predictions for rows [start, end) of `history`. For each
// step the hidden state is rolled with posterior-mean latents over the
// preceding `window` rows (matching the window-local conditioning used in
// training; window <= 0 means the full history) and the decoder consumes the
// prior mean, so repeated calls are identical.
std::vector<ForecastStep> forecast(const Model& m, const Matrix& history, int start, int end,
                                   int window = 0);

// ---- checkpointing (bit-exact binary container) ----

void save_checkpoint(const std::string& path, const Model& m, const TrainingConfig& cfg,
                     int epoch);
struct Checkpoint {
    Model model;
    TrainingConfig config;
    int epoch = 0;
};
Checkpoint load_checkpoint(const std::string& path);

} // namespace wpvc::vlstm
