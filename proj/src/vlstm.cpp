#include "wpvc/vlstm.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "wpvc/depstats.hpp"
#include "wpvc/errors.hpp"
#include "wpvc/rng.hpp"
#include "wpvc/special.hpp"

namespace wpvc::vlstm {

using ad::Tape;
using ad::Var;

const char* ablation_name(Ablation a) {
    switch (a) {
        case Ablation::Wpvc: return "wpvc";
        case Ablation::MeanField: return "mean_field";
        case Ablation::PlainLstm: return "plain_lstm";
    }
    return "?";
}

Ablation ablation_from_name(const std::string& name) {
    if (name == "wpvc") return Ablation::Wpvc;
    if (name == "mean_field") return Ablation::MeanField;
    if (name == "plain_lstm") return Ablation::PlainLstm;
    throw ConfigError("unknown ablation mode: " + name);
}

const char* latent_copula_name(LatentCopula c) {
    return c == LatentCopula::Dimensions ? "dimensions" : "time";
}

LatentCopula latent_copula_from_name(const std::string& name) {
    if (name == "dimensions") return LatentCopula::Dimensions;
    if (name == "time") return LatentCopula::Time;
    throw ConfigError("unknown latent copula mode: " + name);
}

std::size_t ParamStore::add(const std::string& name, std::vector<int> shape) {
    Tensor t;
    t.name = name;
    t.shape = std::move(shape);
    t.size = 1;
    for (int s : t.shape) t.size *= static_cast<std::size_t>(s);
    t.offset = values.size();
    values.resize(values.size() + t.size, 0.0);
    tensors.push_back(t);
    return t.offset;
}

const ParamStore::Tensor& ParamStore::find(const std::string& name) const {
    for (const auto& t : tensors)
        if (t.name == name) return t;
    throw StructuralError("ParamStore: unknown tensor " + name);
}

double* ParamStore::data(const std::string& name) { return values.data() + find(name).offset; }
const double* ParamStore::data(const std::string& name) const {
    return values.data() + find(name).offset;
}

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

struct Offsets {
    std::size_t gx_W1, gx_b1, gx_W2, gx_b2;
    std::size_t gz_W1, gz_b1, gz_W2, gz_b2;
    std::size_t gy_W1, gy_b1, gy_W2, gy_b2;
    std::size_t W[4], U[4], B[4]; // gate order f, i, o, c
    std::size_t enc_mu_W, enc_mu_b, enc_ls_W, enc_ls_b;
    std::size_t pri_mu_W, pri_mu_b, pri_ls_W, pri_ls_b;
    std::size_t dec_mu_W, dec_mu_b, dec_ls_W, dec_ls_b;
    std::size_t dir_W, dir_b;
};

Offsets offsets(const ParamStore& p) {
    Offsets o;
    o.gx_W1 = p.find("gx.W1").offset;
    o.gx_b1 = p.find("gx.b1").offset;
    o.gx_W2 = p.find("gx.W2").offset;
    o.gx_b2 = p.find("gx.b2").offset;
    o.gz_W1 = p.find("gz.W1").offset;
    o.gz_b1 = p.find("gz.b1").offset;
    o.gz_W2 = p.find("gz.W2").offset;
    o.gz_b2 = p.find("gz.b2").offset;
    o.gy_W1 = p.find("gy.W1").offset;
    o.gy_b1 = p.find("gy.b1").offset;
    o.gy_W2 = p.find("gy.W2").offset;
    o.gy_b2 = p.find("gy.b2").offset;
    const char* gates = "fioc";
    for (int g = 0; g < 4; ++g) {
        const std::string s(1, gates[g]);
        o.W[g] = p.find("lstm.W" + s).offset;
        o.U[g] = p.find("lstm.U" + s).offset;
        o.B[g] = p.find("lstm.b" + s).offset;
    }
    o.enc_mu_W = p.find("enc.mu.W").offset;
    o.enc_mu_b = p.find("enc.mu.b").offset;
    o.enc_ls_W = p.find("enc.ls.W").offset;
    o.enc_ls_b = p.find("enc.ls.b").offset;
    o.pri_mu_W = p.find("prior.mu.W").offset;
    o.pri_mu_b = p.find("prior.mu.b").offset;
    o.pri_ls_W = p.find("prior.ls.W").offset;
    o.pri_ls_b = p.find("prior.ls.b").offset;
    o.dec_mu_W = p.find("dec.mu.W").offset;
    o.dec_mu_b = p.find("dec.mu.b").offset;
    o.dec_ls_W = p.find("dec.ls.W").offset;
    o.dec_ls_b = p.find("dec.ls.b").offset;
    o.dir_W = p.find("dir.W").offset;
    o.dir_b = p.find("dir.b").offset;
    return o;
}

double v_tanh(double x) { return std::tanh(x); }
Var v_tanh(Var x) { return ad::tanh(x); }
double v_sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
Var v_sigmoid(Var x) { return ad::sigmoid(x); }

template <class T>
std::vector<T> affine(const T* W, const T* b, int rows, int cols, const std::vector<T>& x) {
    std::vector<T> out;
    out.reserve(rows);
    for (int i = 0; i < rows; ++i) {
        T s = b[i];
        const T* row = W + static_cast<std::size_t>(i) * cols;
        for (int j = 0; j < cols; ++j) s = s + row[j] * x[j];
        out.push_back(s);
    }
    return out;
}

template <class T>
std::vector<T> mlp2(const T* W1, const T* b1, const T* W2, const T* b2, int feat, int in,
                    const std::vector<T>& x) {
    std::vector<T> h1 = affine(W1, b1, feat, in, x);
    for (auto& v : h1) v = v_tanh(v);
    std::vector<T> h2 = affine(W2, b2, feat, feat, h1);
    for (auto& v : h2) v = v_tanh(v);
    return h2;
}

// One LSTM cell update in place: gates from W x + U h + b,
// c = i*chat + f*c_prev, h = o*tanh(c).
template <class T>
void lstm_cell(const Offsets& o, const T* P, int d_h, int d_in, const std::vector<T>& in,
               std::vector<T>& h, std::vector<T>& c) {
    std::vector<T> pre[4];
    for (int g = 0; g < 4; ++g) {
        pre[g] = affine(P + o.W[g], P + o.B[g], d_h, d_in, in);
        const T* U = P + o.U[g];
        for (int i = 0; i < d_h; ++i) {
            T s = pre[g][i];
            const T* row = U + static_cast<std::size_t>(i) * d_h;
            for (int j = 0; j < d_h; ++j) s = s + row[j] * h[j];
            pre[g][i] = s;
        }
    }
    std::vector<T> new_h(h.size(), h.empty() ? T{} : h[0]), new_c = new_h;
    for (int i = 0; i < d_h; ++i) {
        T f = v_sigmoid(pre[0][i]);
        T ig = v_sigmoid(pre[1][i]);
        T og = v_sigmoid(pre[2][i]);
        T chat = v_tanh(pre[3][i]);
        new_c[i] = ig * chat + f * c[i];
        new_h[i] = og * v_tanh(new_c[i]);
    }
    h = std::move(new_h);
    c = std::move(new_c);
}

bool is_prediction_tensor(const std::string& name) {
    return name.rfind("gy.", 0) == 0 || name.rfind("dir.", 0) == 0;
}

} // namespace

Model::Model(Dimensions d, Ablation a, std::uint64_t seed) : dims(d), ablation(a) {
    const int fx = dims.d_feat;
    const int d_in = 2 * fx; // LSTM consumes [g_x(x), g_z(z)]
    params.add("gx.W1", {fx, dims.d_x});
    params.add("gx.b1", {fx});
    params.add("gx.W2", {fx, fx});
    params.add("gx.b2", {fx});
    params.add("gz.W1", {fx, dims.d_z});
    params.add("gz.b1", {fx});
    params.add("gz.W2", {fx, fx});
    params.add("gz.b2", {fx});
    params.add("gy.W1", {fx, dims.d_h});
    params.add("gy.b1", {fx});
    params.add("gy.W2", {fx, fx});
    params.add("gy.b2", {fx});
    for (const char* g : {"f", "i", "o", "c"}) {
        params.add(std::string("lstm.W") + g, {dims.d_h, d_in});
        params.add(std::string("lstm.U") + g, {dims.d_h, dims.d_h});
        params.add(std::string("lstm.b") + g, {dims.d_h});
    }
    params.add("enc.mu.W", {dims.d_z, fx + dims.d_h});
    params.add("enc.mu.b", {dims.d_z});
    params.add("enc.ls.W", {dims.d_z, fx + dims.d_h});
    params.add("enc.ls.b", {dims.d_z});
    params.add("prior.mu.W", {dims.d_z, dims.d_h});
    params.add("prior.mu.b", {dims.d_z});
    params.add("prior.ls.W", {dims.d_z, dims.d_h});
    params.add("prior.ls.b", {dims.d_z});
    params.add("dec.mu.W", {dims.d_x, fx + dims.d_h});
    params.add("dec.mu.b", {dims.d_x});
    params.add("dec.ls.W", {dims.d_x, fx + dims.d_h});
    params.add("dec.ls.b", {dims.d_x});
    params.add("dir.W", {dims.d_x, fx});
    params.add("dir.b", {dims.d_x});

    // Weights uniform in +-1/sqrt(fan-in); biases and the log-sigma heads
    // start at zero so every initial sigma is 1.
    Rng rng(seed);
    for (const auto& t : params.tensors) {
        const bool is_log_sigma = t.name.find(".ls.") != std::string::npos;
        const bool is_bias = t.shape.size() == 1;
        if (is_log_sigma || is_bias) continue;
        const int fan_in = t.shape.back();
        const double s = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (std::size_t i = 0; i < t.size; ++i) params.values[t.offset + i] = rng.uniform(-s, s);
    }
}

// ---------------------------------------------------------------------------
// Standalone double-path operations.

LstmState lstm_step(const Model& m, std::span<const double> x_concat, const LstmState& prev) {
    const int d_in = 2 * m.dims.d_feat;
    if (static_cast<int>(x_concat.size()) != d_in ||
        static_cast<int>(prev.h.size()) != m.dims.d_h ||
        static_cast<int>(prev.c.size()) != m.dims.d_h)
        throw StructuralError("lstm_step: dimension mismatch");
    const Offsets o = offsets(m.params);
    std::vector<double> in(x_concat.begin(), x_concat.end());
    LstmState s = prev;
    lstm_cell(o, m.params.values.data(), m.dims.d_h, d_in, in, s.h, s.c);
    return s;
}

void encode(const Model& m, std::span<const double> x_t, std::span<const double> h_prev,
            std::vector<double>& mu, std::vector<double>& sigma) {
    if (static_cast<int>(x_t.size()) != m.dims.d_x ||
        static_cast<int>(h_prev.size()) != m.dims.d_h)
        throw StructuralError("encode: dimension mismatch");
    const Offsets o = offsets(m.params);
    const double* P = m.params.values.data();
    std::vector<double> x(x_t.begin(), x_t.end());
    std::vector<double> gx = mlp2(P + o.gx_W1, P + o.gx_b1, P + o.gx_W2, P + o.gx_b2,
                                  m.dims.d_feat, m.dims.d_x, x);
    std::vector<double> in = gx;
    in.insert(in.end(), h_prev.begin(), h_prev.end());
    mu = affine(P + o.enc_mu_W, P + o.enc_mu_b, m.dims.d_z, m.dims.d_feat + m.dims.d_h, in);
    sigma = affine(P + o.enc_ls_W, P + o.enc_ls_b, m.dims.d_z, m.dims.d_feat + m.dims.d_h, in);
    for (auto& s : sigma) s = std::exp(s);
}

std::vector<double> reparameterize(std::span<const double> mu, std::span<const double> sigma,
                                   std::span<const double> eps) {
    if (mu.size() != sigma.size() || mu.size() != eps.size())
        throw StructuralError("reparameterize: dimension mismatch");
    std::vector<double> z(mu.size());
    for (std::size_t i = 0; i < z.size(); ++i) {
        if (!(sigma[i] > 0.0)) throw DomainError("reparameterize: sigma must be positive");
        z[i] = mu[i] + sigma[i] * eps[i];
    }
    return z;
}

double mean_field_log_q(const LatentPosterior& post) {
    double log_sigma = 0.0, quad = 0.0;
    const int W = post.mu.rows, d = post.mu.cols;
    for (int t = 0; t < W; ++t)
        for (int k = 0; k < d; ++k) {
            const double s = post.sigma.at(t, k);
            const double r = post.z.at(t, k) - post.mu.at(t, k);
            log_sigma += std::log(std::fabs(s));
            quad += r * r / (2.0 * s * s);
        }
    return -log_sigma - quad - 0.5 * static_cast<double>(W) * d * kLog2Pi;
}

double copula_log_posterior(const LatentPosterior& post, const vine::VineStructure& v) {
    double cop = 0.0;
    if (v.n == post.mu.cols && v.active_edge_count() > 0) {
        for (int t = 0; t < post.u.rows; ++t) {
            std::vector<double> row(post.u.cols);
            for (int k = 0; k < post.u.cols; ++k) row[k] = post.u.at(t, k);
            cop += vine::vine_log_density(v, row);
        }
    }
    return cop + mean_field_log_q(post);
}

double gaussian_kl(double mu_q, double sigma_q, double mu_p, double sigma_p) {
    return std::log(sigma_p / sigma_q) +
           (sigma_q * sigma_q + (mu_q - mu_p) * (mu_q - mu_p)) / (2.0 * sigma_p * sigma_p) - 0.5;
}

double prediction_loss(std::span<const int> y_up, std::span<const double> p_up) {
    if (y_up.size() != p_up.size()) throw StructuralError("prediction_loss: length mismatch");
    double loss = 0.0;
    for (std::size_t i = 0; i < y_up.size(); ++i) {
        const double p = std::clamp(p_up[i], 1e-12, 1.0 - 1e-12);
        loss -= y_up[i] != 0 ? std::log(p) : std::log(1.0 - p);
    }
    return loss;
}

double total_loss(double elbo_value, double pred_loss_value) { return pred_loss_value - elbo_value; }

// ---------------------------------------------------------------------------
// Window graph.

WindowGraph build_window_graph(const Model& m, Tape& tape, const Matrix& x, const Matrix& eps) {
    if (x.cols != m.dims.d_x) throw StructuralError("window graph: data width != d_x");
    const bool latent = m.ablation != Ablation::PlainLstm;
    if (latent && (eps.rows != x.rows || eps.cols != m.dims.d_z))
        throw StructuralError("window graph: eps shape mismatch");

    const Offsets o = offsets(m.params);
    WindowGraph g;
    g.param_leaves.reserve(m.params.values.size());
    for (double v : m.params.values) g.param_leaves.push_back(tape.leaf(v));
    const bool use_vine = latent && m.ablation == Ablation::Wpvc && m.has_vine &&
                          m.latent_vine.active_edge_count() > 0;
    if (use_vine)
        for (double v : vine::collect_edge_params(m.latent_vine))
            g.eta_leaves.push_back(tape.leaf(v));

    const Var* P = g.param_leaves.data();
    const int W = x.rows, d_h = m.dims.d_h, d_x = m.dims.d_x, d_z = m.dims.d_z,
              fx = m.dims.d_feat;
    const int d_in = 2 * fx;

    std::vector<Var> h(d_h, tape.constant(0.0));
    std::vector<Var> c(d_h, tape.constant(0.0));
    std::vector<Var> zero_feat(fx, tape.constant(0.0));

    Var pred = tape.constant(0.0);
    Var elbo = tape.constant(0.0);
    Var cop = tape.constant(0.0);

    for (int t = 0; t < W; ++t) {
        std::vector<Var> xt;
        xt.reserve(d_x);
        for (int i = 0; i < d_x; ++i) xt.push_back(tape.constant(x.at(t, i)));

        // Direction head reads only h_{t-1}: a one-step-ahead prediction.
        std::vector<Var> gy = mlp2(P + o.gy_W1, P + o.gy_b1, P + o.gy_W2, P + o.gy_b2, fx, d_h, h);
        std::vector<Var> logits = affine(P + o.dir_W, P + o.dir_b, d_x, fx, gy);
        for (int i = 0; i < d_x; ++i) {
            Var p = ad::sigmoid(logits[i]);
            if (x.at(t, i) > 0.0) pred = pred - ad::log(p);
            else pred = pred - ad::log(1.0 - p);
        }

        std::vector<Var> gx = mlp2(P + o.gx_W1, P + o.gx_b1, P + o.gx_W2, P + o.gx_b2, fx, d_x, xt);

        std::vector<Var> gz = zero_feat;
        Var kl = tape.constant(0.0);
        if (latent) {
            std::vector<Var> pmu = affine(P + o.pri_mu_W, P + o.pri_mu_b, d_z, d_h, h);
            std::vector<Var> pls = affine(P + o.pri_ls_W, P + o.pri_ls_b, d_z, d_h, h);
            std::vector<Var> enc_in = gx;
            enc_in.insert(enc_in.end(), h.begin(), h.end());
            std::vector<Var> qmu =
                affine(P + o.enc_mu_W, P + o.enc_mu_b, d_z, fx + d_h, enc_in);
            std::vector<Var> qls =
                affine(P + o.enc_ls_W, P + o.enc_ls_b, d_z, fx + d_h, enc_in);

            std::vector<Var> z(d_z, Var{});
            for (int k = 0; k < d_z; ++k) {
                Var sq = ad::exp(qls[k]);
                z[k] = qmu[k] + sq * eps.at(t, k);
                // KL(q || p) in closed form, written with the log-sigma heads.
                Var d = qmu[k] - pmu[k];
                kl = kl + (pls[k] - qls[k]) +
                     (ad::exp(2.0 * qls[k]) + d * d) / (2.0 * ad::exp(2.0 * pls[k])) - 0.5;
            }
            gz = mlp2(P + o.gz_W1, P + o.gz_b1, P + o.gz_W2, P + o.gz_b2, fx, d_z, z);
        }

        std::vector<Var> dec_in = gz;
        dec_in.insert(dec_in.end(), h.begin(), h.end());
        std::vector<Var> xmu = affine(P + o.dec_mu_W, P + o.dec_mu_b, d_x, fx + d_h, dec_in);
        std::vector<Var> xls = affine(P + o.dec_ls_W, P + o.dec_ls_b, d_x, fx + d_h, dec_in);
        Var rec = tape.constant(0.0);
        for (int i = 0; i < d_x; ++i) {
            Var r = xt[i] - xmu[i];
            rec = rec - xls[i] - (r * r) / (2.0 * ad::exp(2.0 * xls[i])) - 0.5 * kLog2Pi;
        }
        elbo = elbo + rec - kl;

        std::vector<Var> in = gx;
        in.insert(in.end(), gz.begin(), gz.end());
        lstm_cell(o, P, d_h, d_in, in, h, c);
    }

    // Copula term over u = Phi((z - mu)/sigma) = Phi(eps): constant w.r.t.
    // the network, so it trains eta only. The vine couples the latent
    // dimensions per step, or fixed blocks of time steps per dimension.
    if (use_vine) {
        if (m.latent_copula == LatentCopula::Dimensions) {
            if (m.latent_vine.n != d_z)
                throw StructuralError("window graph: vine dimension != d_z");
            std::vector<Var> u(d_z, Var{});
            for (int t = 0; t < W; ++t) {
                for (int k = 0; k < d_z; ++k)
                    u[k] = tape.constant(special::normal_cdf(eps.at(t, k)));
                cop = cop + vine::vine_log_density_graph(m.latent_vine, tape, u, g.eta_leaves);
            }
        } else {
            const int L = m.latent_copula_window;
            if (m.latent_vine.n != L)
                throw StructuralError("window graph: vine dimension != latent copula window");
            std::vector<Var> u(L, Var{});
            for (int k = 0; k < d_z; ++k)
                for (int b0 = 0; b0 + L <= W; b0 += L) {
                    for (int j = 0; j < L; ++j)
                        u[j] = tape.constant(special::normal_cdf(eps.at(b0 + j, k)));
                    cop = cop + vine::vine_log_density_graph(m.latent_vine, tape, u, g.eta_leaves);
                }
        }
    }

    // L_VAE = sum_t (rec - KL) - log c(u; eta); the loss minimizes L_P - L_VAE.
    g.pred_loss = pred;
    if (use_vine) g.neg_elbo = cop - elbo;
    else g.neg_elbo = tape.constant(0.0) - elbo;
    g.total = g.pred_loss + g.neg_elbo;
    return g;
}

LossBreakdown window_loss(const Model& m, const Matrix& x_window, const Matrix& eps) {
    Tape tape;
    WindowGraph g = build_window_graph(m, tape, x_window, eps);
    return {g.pred_loss.value(), g.neg_elbo.value(), g.total.value()};
}

void window_loss_gradient(const Model& m, const Matrix& x_window, const Matrix& eps,
                          std::vector<double>& param_grad, std::vector<double>& eta_grad) {
    Tape tape;
    WindowGraph g = build_window_graph(m, tape, x_window, eps);
    std::vector<double> adj = ad::backward(tape, g.total);
    param_grad.resize(g.param_leaves.size());
    for (std::size_t i = 0; i < g.param_leaves.size(); ++i) param_grad[i] = adj[g.param_leaves[i].idx];
    eta_grad.resize(g.eta_leaves.size());
    for (std::size_t i = 0; i < g.eta_leaves.size(); ++i) eta_grad[i] = adj[g.eta_leaves[i].idx];
}

// ---------------------------------------------------------------------------
// Training.

namespace {

// Keep a refreshed copula parameter inside its family's admissible domain.
void project_eta(vine::VineStructure& v, std::vector<double>& eta) {
    std::size_t ofs = 0;
    for (auto& t : v.trees)
        for (auto& e : t.edges) {
            if (e.truncated) continue;
            using copula::CopulaFamily;
            switch (e.pair_copula.family) {
                case CopulaFamily::Gaussian:
                    eta[ofs] = std::clamp(eta[ofs], -0.9999, 0.9999);
                    break;
                case CopulaFamily::StudentT:
                    eta[ofs] = std::clamp(eta[ofs], -0.9999, 0.9999);
                    eta[ofs + 1] = std::clamp(eta[ofs + 1], 2.1, 100.0);
                    break;
                case CopulaFamily::Clayton:
                    eta[ofs] = std::clamp(eta[ofs], 1e-4, 28.0);
                    break;
                case CopulaFamily::Gumbel:
                    eta[ofs] = std::clamp(eta[ofs], 1.0 + 1e-8, 17.0);
                    break;
                case CopulaFamily::Frank:
                    eta[ofs] = std::clamp(eta[ofs], -100.0, 100.0);
                    if (std::fabs(eta[ofs]) < 1e-3) eta[ofs] = eta[ofs] < 0 ? -1e-3 : 1e-3;
                    break;
                default:
                    break;
            }
            ofs += e.pair_copula.params.size();
        }
}

} // namespace

TrainResult train(const Matrix& returns, const TrainingConfig& cfg, const CheckpointFn& checkpoint) {
    if (returns.rows < 2 * cfg.window)
        throw DataError("train: need at least two windows of data (" +
                        std::to_string(2 * cfg.window) + " rows)");
    if (cfg.epochs < 1 || !(cfg.learning_rate > 0.0))
        throw ConfigError("train: epochs must be >= 1 and learning rate positive");

    Dimensions dims = cfg.dims;
    dims.d_x = returns.cols;
    if (cfg.latent_copula == LatentCopula::Time &&
        (cfg.latent_copula_window < 2 || cfg.latent_copula_window > cfg.window))
        throw ConfigError("train: latent_copula_window must lie in [2, window]");
    TrainResult result;
    result.model = Model(dims, cfg.ablation, cfg.seed);
    Model& m = result.model;
    m.latent_copula = cfg.latent_copula;
    m.latent_copula_window = cfg.latent_copula_window;

    Rng rng(cfg.seed ^ 0xd1b54a32d192ed03ULL); // training stream, separate from init

    // Deterministic window subsample, stride 1 over the data.
    std::vector<int> starts;
    const int all = returns.rows - cfg.window + 1;
    if (cfg.max_windows_per_epoch > 0 && all > cfg.max_windows_per_epoch) {
        const double stride = static_cast<double>(all) / cfg.max_windows_per_epoch;
        for (int i = 0; i < cfg.max_windows_per_epoch; ++i)
            starts.push_back(static_cast<int>(i * stride));
    } else {
        for (int i = 0; i < all; ++i) starts.push_back(i);
    }

    const bool latent = cfg.ablation != Ablation::PlainLstm;
    const bool wpvc = cfg.ablation == Ablation::Wpvc;
    const int pool_cap = 1024;
    std::vector<double> pool_rows;

    std::vector<double> prev_params;
    vine::VineStructure prev_vine;
    bool prev_has_vine = false;

    Tape tape;
    Matrix xw(cfg.window, dims.d_x), ew(cfg.window, dims.d_z);
    std::vector<double> accP, accV, accEta;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        // Latent-vine refresh from the residuals pooled in earlier epochs.
        const int vine_dim =
            cfg.latent_copula == LatentCopula::Dimensions ? dims.d_z : cfg.latent_copula_window;
        if (wpvc && cfg.refresh_interval > 0 && epoch > 0 && epoch % cfg.refresh_interval == 0 &&
            static_cast<int>(pool_rows.size()) >= 16 * vine_dim) {
            stats::PseudoObservations pobs;
            pobs.n = vine_dim;
            pobs.T = static_cast<int>(pool_rows.size()) / vine_dim;
            pobs.u = pool_rows;
            try {
                auto corr = stats::estimate_pairwise(pobs);
                auto v = vine::select_structure(corr, vine::EdgeWeightMatrix::uniform(vine_dim),
                                                nullptr);
                v = vine::truncate(v, cfg.rho_trun);
                v = vine::assign_copulas(v, pobs, cfg.copula_candidates);
                m.latent_vine = std::move(v);
                m.has_vine = true;
            } catch (const std::exception&) {
                // Keep the previous vine when a refresh fails to fit.
            }
            pool_rows.clear();
        }

        prev_params = m.params.values;
        prev_vine = m.latent_vine;
        prev_has_vine = m.has_vine;

        double ep_pred = 0.0, ep_neg = 0.0, ep_total = 0.0;
        int windows_done = 0;

        for (std::size_t b0 = 0; b0 < starts.size(); b0 += cfg.batch_size) {
            const std::size_t b1 = std::min(starts.size(), b0 + cfg.batch_size);
            const double inv = 1.0 / static_cast<double>(b1 - b0);

            std::vector<double> eta = m.has_vine ? vine::collect_edge_params(m.latent_vine)
                                                 : std::vector<double>();
            accP.assign(m.params.values.size(), 0.0);
            accV.assign(m.params.values.size(), 0.0);
            accEta.assign(eta.size(), 0.0);
            double bp = 0.0, bv = 0.0;

            for (std::size_t w = b0; w < b1; ++w) {
                const int s = starts[w];
                for (int t = 0; t < cfg.window; ++t)
                    for (int i = 0; i < dims.d_x; ++i) xw.at(t, i) = returns.at(s + t, i);
                if (latent)
                    for (int t = 0; t < cfg.window; ++t)
                        for (int k = 0; k < dims.d_z; ++k) ew.at(t, k) = rng.normal();

                tape.clear();
                WindowGraph g = build_window_graph(m, tape, xw, ew);
                bp += g.pred_loss.value();
                bv += g.neg_elbo.value();

                std::vector<double> adjP = ad::backward(tape, g.pred_loss);
                std::vector<double> adjV = ad::backward(tape, g.neg_elbo);
                for (std::size_t i = 0; i < g.param_leaves.size(); ++i) {
                    accP[i] += adjP[g.param_leaves[i].idx];
                    accV[i] += adjV[g.param_leaves[i].idx];
                }
                for (std::size_t i = 0; i < g.eta_leaves.size(); ++i)
                    accEta[i] += adjV[g.eta_leaves[i].idx];

                if (wpvc && latent &&
                    static_cast<int>(pool_rows.size()) / vine_dim < pool_cap) {
                    if (cfg.latent_copula == LatentCopula::Dimensions) {
                        for (int t = 0; t < cfg.window; ++t)
                            for (int k = 0; k < dims.d_z; ++k)
                                pool_rows.push_back(std::clamp(
                                    special::normal_cdf(ew.at(t, k)), 1e-12, 1.0 - 1e-12));
                    } else {
                        const int L = cfg.latent_copula_window;
                        for (int k = 0; k < dims.d_z; ++k)
                            for (int b0 = 0; b0 + L <= cfg.window; b0 += L)
                                for (int j = 0; j < L; ++j)
                                    pool_rows.push_back(std::clamp(
                                        special::normal_cdf(ew.at(b0 + j, k)), 1e-12, 1.0 - 1e-12));
                    }
                }
                ++windows_done;
            }

            ep_pred += bp;
            ep_neg += bv;
            ep_total += bp + bv;

            if (!std::isfinite(bp) || !std::isfinite(bv)) {
                m.params.values = prev_params;
                m.latent_vine = prev_vine;
                m.has_vine = prev_has_vine;
                m.trained = true;
                if (checkpoint) checkpoint(epoch, m);
                result.diverged = true;
                result.epochs_run = epoch;
                return result;
            }

            // Block-coordinate updates: variational parameters from -L_VAE, the
            // prediction head (g_y and the direction layer) from L_P last,
            // eta from the copula part of -L_VAE. Each block is its own
            // coordinate step and is clipped on its own norm, so the copula
            // block never perturbs the network trajectory.
            std::vector<double> step(m.params.values.size());
            double norm_var = 0.0, norm_pred = 0.0, norm_eta = 0.0;
            for (const auto& tensor : m.params.tensors) {
                const bool pred_block = is_prediction_tensor(tensor.name);
                for (std::size_t i = tensor.offset; i < tensor.offset + tensor.size; ++i) {
                    step[i] = (pred_block ? accP[i] : accV[i]) * inv;
                    (pred_block ? norm_pred : norm_var) += step[i] * step[i];
                }
            }
            for (std::size_t i = 0; i < accEta.size(); ++i) {
                accEta[i] *= inv;
                norm_eta += accEta[i] * accEta[i];
            }
            auto clip_scale = [&](double norm2) {
                const double norm = std::sqrt(norm2);
                return (cfg.grad_clip > 0.0 && norm > cfg.grad_clip) ? cfg.grad_clip / norm : 1.0;
            };
            const double s_var = clip_scale(norm_var);
            const double s_pred = clip_scale(norm_pred);
            const double s_eta = clip_scale(norm_eta);

            for (const auto& tensor : m.params.tensors) {
                const double s = is_prediction_tensor(tensor.name) ? s_pred : s_var;
                for (std::size_t i = tensor.offset; i < tensor.offset + tensor.size; ++i)
                    m.params.values[i] -= cfg.learning_rate * s * step[i];
            }
            if (!eta.empty()) {
                for (std::size_t i = 0; i < eta.size(); ++i)
                    eta[i] -= cfg.learning_rate * s_eta * accEta[i];
                project_eta(m.latent_vine, eta);
                vine::set_edge_params(m.latent_vine, eta);
            }
        }

        TraceRow row;
        row.epoch = epoch;
        row.pred_loss = ep_pred / windows_done;
        row.neg_elbo = ep_neg / windows_done;
        row.total = ep_total / windows_done;
        result.trace.push_back(row);
        result.epochs_run = epoch + 1;

        if (checkpoint && cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0) {
            m.trained = true;
            checkpoint(epoch + 1, m);
        }
        if (row.total < cfg.loss_threshold) {
            result.converged = true;
            break;
        }
    }

    m.trained = true;
    if (checkpoint) checkpoint(result.epochs_run, m);
    return result;
}

// ---------------------------------------------------------------------------
// Forecasting.

void prior_params(const Model& m, const LstmState& state, std::vector<double>& mu,
                  std::vector<double>& sigma) {
    const Offsets o = offsets(m.params);
    const double* P = m.params.values.data();
    mu = affine(P + o.pri_mu_W, P + o.pri_mu_b, m.dims.d_z, m.dims.d_h, state.h);
    sigma = affine(P + o.pri_ls_W, P + o.pri_ls_b, m.dims.d_z, m.dims.d_h, state.h);
    for (auto& s : sigma) s = std::exp(s);
}

void decode(const Model& m, std::span<const double> z, const LstmState& state,
            std::vector<double>& mu, std::vector<double>& sigma) {
    const Offsets o = offsets(m.params);
    const double* P = m.params.values.data();
    const int fx = m.dims.d_feat;
    std::vector<double> gz(fx, 0.0);
    if (m.ablation != Ablation::PlainLstm) {
        std::vector<double> zv(z.begin(), z.end());
        gz = mlp2(P + o.gz_W1, P + o.gz_b1, P + o.gz_W2, P + o.gz_b2, fx, m.dims.d_z, zv);
    }
    std::vector<double> in = gz;
    in.insert(in.end(), state.h.begin(), state.h.end());
    mu = affine(P + o.dec_mu_W, P + o.dec_mu_b, m.dims.d_x, fx + m.dims.d_h, in);
    sigma = affine(P + o.dec_ls_W, P + o.dec_ls_b, m.dims.d_x, fx + m.dims.d_h, in);
    for (auto& s : sigma) s = std::exp(s);
}

std::vector<double> direction_probabilities(const Model& m, const LstmState& state) {
    const Offsets o = offsets(m.params);
    const double* P = m.params.values.data();
    std::vector<double> gy = mlp2(P + o.gy_W1, P + o.gy_b1, P + o.gy_W2, P + o.gy_b2,
                                  m.dims.d_feat, m.dims.d_h, state.h);
    std::vector<double> logits = affine(P + o.dir_W, P + o.dir_b, m.dims.d_x, m.dims.d_feat, gy);
    for (auto& v : logits) v = 1.0 / (1.0 + std::exp(-v));
    return logits;
}

LstmState advance_state(const Model& m, std::span<const double> x_t, std::span<const double> z_t,
                        const LstmState& state) {
    const Offsets o = offsets(m.params);
    const double* P = m.params.values.data();
    const int fx = m.dims.d_feat;
    std::vector<double> xv(x_t.begin(), x_t.end());
    std::vector<double> gx = mlp2(P + o.gx_W1, P + o.gx_b1, P + o.gx_W2, P + o.gx_b2, fx,
                                  m.dims.d_x, xv);
    std::vector<double> gz(fx, 0.0);
    if (m.ablation != Ablation::PlainLstm) {
        std::vector<double> zv(z_t.begin(), z_t.end());
        gz = mlp2(P + o.gz_W1, P + o.gz_b1, P + o.gz_W2, P + o.gz_b2, fx, m.dims.d_z, zv);
    }
    std::vector<double> in = gx;
    in.insert(in.end(), gz.begin(), gz.end());
    LstmState s = state;
    lstm_cell(o, P, m.dims.d_h, 2 * fx, in, s.h, s.c);
    return s;
}

std::vector<ForecastStep> forecast(const Model& m, const Matrix& history, int start, int end,
                                   int window) {
    if (!m.trained) throw ConfigError("forecast: model has not been trained");
    if (history.cols != m.dims.d_x) throw DataError("forecast: data width != d_x");
    if (start < 0 || end > history.rows || start > end)
        throw RangeError("forecast: range outside the data");

    const bool latent = m.ablation != Ablation::PlainLstm;
    std::vector<ForecastStep> out;
    std::vector<double> xt(m.dims.d_x), zmu(m.dims.d_z, 0.0), zsig;

    for (int t = start; t < end; ++t) {
        // Condition on the trailing window, from a fresh state, exactly as
        // the training windows were consumed.
        LstmState state{std::vector<double>(m.dims.d_h, 0.0),
                        std::vector<double>(m.dims.d_h, 0.0)};
        const int first = window > 0 ? std::max(0, t - window) : 0;
        for (int s = first; s < t; ++s) {
            for (int i = 0; i < m.dims.d_x; ++i) xt[i] = history.at(s, i);
            if (latent) encode(m, xt, state.h, zmu, zsig);
            state = advance_state(m, xt, zmu, state);
        }
        ForecastStep step;
        step.up_prob = direction_probabilities(m, state);
        std::vector<double> z(m.dims.d_z, 0.0), psig;
        if (latent) prior_params(m, state, z, psig); // prior mean, deterministic
        decode(m, z, state, step.mu, step.sigma);
        out.push_back(std::move(step));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Checkpointing.

namespace {

void put_u32(std::ofstream& f, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    f.write(reinterpret_cast<char*>(b), 4);
}

void put_u64(std::ofstream& f, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    f.write(reinterpret_cast<char*>(b), 8);
}

void put_f64(std::ofstream& f, double v) { put_u64(f, std::bit_cast<std::uint64_t>(v)); }

void put_str(std::ofstream& f, const std::string& s) {
    put_u32(f, static_cast<std::uint32_t>(s.size()));
    f.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::uint32_t get_u32(std::ifstream& f) {
    unsigned char b[4];
    f.read(reinterpret_cast<char*>(b), 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

std::uint64_t get_u64(std::ifstream& f) {
    unsigned char b[8];
    f.read(reinterpret_cast<char*>(b), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

double get_f64(std::ifstream& f) { return std::bit_cast<double>(get_u64(f)); }

std::string get_str(std::ifstream& f) {
    const std::uint32_t n = get_u32(f);
    std::string s(n, '\0');
    f.read(s.data(), n);
    return s;
}

constexpr char kMagic[9] = "WPVCCKP1";

} // namespace

void save_checkpoint(const std::string& path, const Model& m, const TrainingConfig& cfg,
                     int epoch) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("save_checkpoint: cannot open " + path);
    f.write(kMagic, 8);
    put_u32(f, static_cast<std::uint32_t>(epoch));
    put_u32(f, static_cast<std::uint32_t>(m.ablation));
    put_u32(f, m.trained ? 1 : 0);
    put_u32(f, static_cast<std::uint32_t>(m.dims.d_x));
    put_u32(f, static_cast<std::uint32_t>(m.dims.d_h));
    put_u32(f, static_cast<std::uint32_t>(m.dims.d_z));
    put_u32(f, static_cast<std::uint32_t>(m.dims.d_feat));

    put_u32(f, static_cast<std::uint32_t>(cfg.epochs));
    put_u32(f, static_cast<std::uint32_t>(cfg.batch_size));
    put_f64(f, cfg.learning_rate);
    put_u64(f, cfg.seed);
    put_u32(f, static_cast<std::uint32_t>(cfg.checkpoint_every));
    put_f64(f, cfg.loss_threshold);
    put_u32(f, static_cast<std::uint32_t>(cfg.refresh_interval));
    put_u32(f, static_cast<std::uint32_t>(cfg.ablation));
    put_u32(f, static_cast<std::uint32_t>(cfg.window));
    put_f64(f, cfg.grad_clip);
    put_f64(f, cfg.rho_trun);
    put_u32(f, static_cast<std::uint32_t>(cfg.latent_copula));
    put_u32(f, static_cast<std::uint32_t>(cfg.latent_copula_window));
    put_u32(f, static_cast<std::uint32_t>(cfg.max_windows_per_epoch));
    put_u32(f, static_cast<std::uint32_t>(cfg.copula_candidates.size()));
    for (auto fam : cfg.copula_candidates) put_u32(f, static_cast<std::uint32_t>(fam));

    put_u32(f, static_cast<std::uint32_t>(m.params.tensors.size()));
    for (const auto& t : m.params.tensors) {
        put_str(f, t.name);
        put_u32(f, static_cast<std::uint32_t>(t.shape.size()));
        for (int s : t.shape) put_u32(f, static_cast<std::uint32_t>(s));
        put_u64(f, t.size);
        for (std::size_t i = 0; i < t.size; ++i) put_f64(f, m.params.values[t.offset + i]);
    }

    put_u32(f, m.has_vine ? 1 : 0);
    if (m.has_vine) put_str(f, vine::to_text(m.latent_vine));
    if (!f) throw DataError("save_checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("load_checkpoint: cannot open " + path);
    char magic[8];
    f.read(magic, 8);
    if (std::memcmp(magic, kMagic, 8) != 0)
        throw DataError("load_checkpoint: bad magic in " + path);

    Checkpoint out;
    out.epoch = static_cast<int>(get_u32(f));
    const auto ablation = static_cast<Ablation>(get_u32(f));
    const bool trained = get_u32(f) != 0;
    Dimensions dims;
    dims.d_x = static_cast<int>(get_u32(f));
    dims.d_h = static_cast<int>(get_u32(f));
    dims.d_z = static_cast<int>(get_u32(f));
    dims.d_feat = static_cast<int>(get_u32(f));

    TrainingConfig cfg;
    cfg.epochs = static_cast<int>(get_u32(f));
    cfg.batch_size = static_cast<int>(get_u32(f));
    cfg.learning_rate = get_f64(f);
    cfg.seed = get_u64(f);
    cfg.checkpoint_every = static_cast<int>(get_u32(f));
    cfg.loss_threshold = get_f64(f);
    cfg.refresh_interval = static_cast<int>(get_u32(f));
    cfg.ablation = static_cast<Ablation>(get_u32(f));
    cfg.window = static_cast<int>(get_u32(f));
    cfg.grad_clip = get_f64(f);
    cfg.rho_trun = get_f64(f);
    cfg.latent_copula = static_cast<LatentCopula>(get_u32(f));
    cfg.latent_copula_window = static_cast<int>(get_u32(f));
    cfg.max_windows_per_epoch = static_cast<int>(get_u32(f));
    cfg.copula_candidates.clear();
    const std::uint32_t ncand = get_u32(f);
    for (std::uint32_t i = 0; i < ncand; ++i)
        cfg.copula_candidates.push_back(static_cast<copula::CopulaFamily>(get_u32(f)));
    cfg.dims = dims;
    out.config = cfg;

    Model m(dims, ablation, /*seed=*/0);
    const std::uint32_t ntensors = get_u32(f);
    if (ntensors != m.params.tensors.size())
        throw DataError("load_checkpoint: tensor count mismatch");
    for (std::uint32_t ti = 0; ti < ntensors; ++ti) {
        const std::string name = get_str(f);
        const auto& t = m.params.find(name);
        const std::uint32_t rank = get_u32(f);
        std::vector<int> shape(rank);
        for (auto& s : shape) s = static_cast<int>(get_u32(f));
        if (shape != t.shape) throw DataError("load_checkpoint: shape mismatch for " + name);
        const std::uint64_t size = get_u64(f);
        if (size != t.size) throw DataError("load_checkpoint: size mismatch for " + name);
        for (std::uint64_t i = 0; i < size; ++i) m.params.values[t.offset + i] = get_f64(f);
    }
    if (get_u32(f) != 0) {
        m.latent_vine = vine::from_text(get_str(f));
        m.has_vine = true;
    }
    m.trained = trained;
    m.latent_copula = cfg.latent_copula;
    m.latent_copula_window = cfg.latent_copula_window;
    if (!f) throw DataError("load_checkpoint: truncated file " + path);
    out.model = std::move(m);
    return out;
}

} // namespace wpvc::vlstm
