#include "model.hpp"

#include "rng.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace fedsim {

namespace {

// Fixed tensor indices implied by make_empty_model's construction order.
struct ParamLayout {
    int embedding = 0;
    int input_w = 1;
    int input_b = 2;
    int num_blocks = 0;
    int output_w = 0;
    int output_b = 0;

    explicit ParamLayout(const ArchConfig & arch) {
        num_blocks = (int) arch.num_blocks;
        output_w = 3 + 4 * num_blocks;
        output_b = output_w + 1;
    }
    int fc1_w(int r) const { return 3 + 4 * r; }
    int fc1_b(int r) const { return 4 + 4 * r; }
    int fc2_w(int r) const { return 5 + 4 * r; }
    int fc2_b(int r) const { return 6 + 4 * r; }
};

struct Workspace {
    std::vector<double> embed;   // C*d concatenated embedding
    std::vector<double> xs;      // (R+1)*h block inputs, xs[0] = post input tanh
    std::vector<double> ts;      // R*h tanh activations inside each block
    std::vector<double> logits;  // V
    std::vector<double> probs;   // V
    std::vector<double> dx;      // h
    std::vector<double> dz;      // h
    std::vector<double> dembed;  // C*d

    explicit Workspace(const ArchConfig & arch) {
        const size_t cd = (size_t) (arch.context_len * arch.embed_dim);
        const size_t h = (size_t) arch.hidden_dim;
        embed.resize(cd);
        xs.resize(((size_t) arch.num_blocks + 1) * h);
        ts.resize((size_t) arch.num_blocks * h);
        logits.resize((size_t) arch.vocab_size);
        probs.resize((size_t) arch.vocab_size);
        dx.resize(h);
        dz.resize(h);
        dembed.resize(cd);
    }
};

// y = W x + b, W is rows x cols row-major
void affine(const double * w, const double * b, const double * x, double * y, int64_t rows, int64_t cols) {
    for (int64_t i = 0; i < rows; ++i) {
        double acc = b ? b[i] : 0.0;
        const double * wi = w + i * cols;
        for (int64_t j = 0; j < cols; ++j) {
            acc += wi[j] * x[j];
        }
        y[i] = acc;
    }
}

// y += W^T g
void add_matvec_t(const double * w, const double * g, double * y, int64_t rows, int64_t cols) {
    for (int64_t i = 0; i < rows; ++i) {
        const double * wi = w + i * cols;
        const double gi = g[i];
        for (int64_t j = 0; j < cols; ++j) {
            y[j] += wi[j] * gi;
        }
    }
}

// dW += g x^T, db += g
void add_outer(double * dw, double * db, const double * g, const double * x, int64_t rows, int64_t cols) {
    for (int64_t i = 0; i < rows; ++i) {
        double * dwi = dw + i * cols;
        const double gi = g[i];
        for (int64_t j = 0; j < cols; ++j) {
            dwi[j] += gi * x[j];
        }
        db[i] += gi;
    }
}

void check_sample(const ArchConfig & arch, const Sample & s) {
    if ((int64_t) s.context.size() != arch.context_len) {
        throw std::invalid_argument("sample context length does not match the architecture");
    }
    for (token_id t : s.context) {
        if (t < 0 || (int64_t) t >= arch.vocab_size) {
            throw std::out_of_range("context token id out of vocabulary range");
        }
    }
    if (s.target < 0 || (int64_t) s.target >= arch.vocab_size) {
        throw std::out_of_range("target token id out of vocabulary range");
    }
}

// Runs the model on one context, filling the workspace. Returns the NLL of
// the target under the softmax.
double forward_one(const ModelState & m, const ParamLayout & L, Workspace & ws,
                   const token_id * ctx, token_id target) {
    const ArchConfig & a = m.arch;
    const int64_t d = a.embed_dim;
    const int64_t C = a.context_len;
    const int64_t h = a.hidden_dim;
    const int64_t V = a.vocab_size;

    const double * emb = m.params[(size_t) L.embedding].values.data();
    for (int64_t j = 0; j < C; ++j) {
        const double * row = emb + (int64_t) ctx[j] * d;
        double * out = ws.embed.data() + j * d;
        for (int64_t i = 0; i < d; ++i) {
            out[i] = row[i];
        }
    }

    double * x0 = ws.xs.data();
    affine(m.params[(size_t) L.input_w].values.data(), m.params[(size_t) L.input_b].values.data(),
           ws.embed.data(), x0, h, C * d);
    for (int64_t i = 0; i < h; ++i) {
        x0[i] = std::tanh(x0[i]);
    }

    for (int r = 0; r < L.num_blocks; ++r) {
        const double * xin = ws.xs.data() + (size_t) r * (size_t) h;
        double * t = ws.ts.data() + (size_t) r * (size_t) h;
        double * xout = ws.xs.data() + (size_t) (r + 1) * (size_t) h;
        affine(m.params[(size_t) L.fc1_w(r)].values.data(), m.params[(size_t) L.fc1_b(r)].values.data(),
               xin, t, h, h);
        for (int64_t i = 0; i < h; ++i) {
            t[i] = std::tanh(t[i]);
        }
        affine(m.params[(size_t) L.fc2_w(r)].values.data(), m.params[(size_t) L.fc2_b(r)].values.data(),
               t, xout, h, h);
        for (int64_t i = 0; i < h; ++i) {
            xout[i] += xin[i];
        }
    }

    const double * xlast = ws.xs.data() + (size_t) L.num_blocks * (size_t) h;
    affine(m.params[(size_t) L.output_w].values.data(), m.params[(size_t) L.output_b].values.data(),
           xlast, ws.logits.data(), V, h);

    double mx = ws.logits[0];
    for (int64_t i = 1; i < V; ++i) {
        mx = std::max(mx, ws.logits[i]);
    }
    double sum = 0.0;
    for (int64_t i = 0; i < V; ++i) {
        sum += std::exp(ws.logits[i] - mx);
    }
    const double lse = mx + std::log(sum);
    for (int64_t i = 0; i < V; ++i) {
        ws.probs[i] = std::exp(ws.logits[i] - lse);
    }
    return lse - ws.logits[(size_t) target];
}

// Accumulates the (unscaled) gradient of the sample's NLL into grads.
// forward_one must have run for the same sample.
void backward_one(const ModelState & m, const ParamLayout & L, Workspace & ws,
                  const token_id * ctx, token_id target, Gradients & grads) {
    const ArchConfig & a = m.arch;
    const int64_t d = a.embed_dim;
    const int64_t C = a.context_len;
    const int64_t h = a.hidden_dim;
    const int64_t V = a.vocab_size;

    // dlogits = probs - onehot(target), reuse probs in place
    ws.probs[(size_t) target] -= 1.0;

    const double * xlast = ws.xs.data() + (size_t) L.num_blocks * (size_t) h;
    add_outer(grads.params[(size_t) L.output_w].values.data(),
              grads.params[(size_t) L.output_b].values.data(), ws.probs.data(), xlast, V, h);

    double * dx = ws.dx.data();
    for (int64_t i = 0; i < h; ++i) {
        dx[i] = 0.0;
    }
    add_matvec_t(m.params[(size_t) L.output_w].values.data(), ws.probs.data(), dx, V, h);

    double * dz = ws.dz.data();
    for (int r = L.num_blocks - 1; r >= 0; --r) {
        const double * xin = ws.xs.data() + (size_t) r * (size_t) h;
        const double * t = ws.ts.data() + (size_t) r * (size_t) h;
        // x_out = x_in + W2 tanh(W1 x_in + b1) + b2; dx currently holds d(x_out)
        add_outer(grads.params[(size_t) L.fc2_w(r)].values.data(),
                  grads.params[(size_t) L.fc2_b(r)].values.data(), dx, t, h, h);
        for (int64_t i = 0; i < h; ++i) {
            dz[i] = 0.0;
        }
        add_matvec_t(m.params[(size_t) L.fc2_w(r)].values.data(), dx, dz, h, h);
        for (int64_t i = 0; i < h; ++i) {
            dz[i] *= 1.0 - t[i] * t[i];
        }
        add_outer(grads.params[(size_t) L.fc1_w(r)].values.data(),
                  grads.params[(size_t) L.fc1_b(r)].values.data(), dz, xin, h, h);
        add_matvec_t(m.params[(size_t) L.fc1_w(r)].values.data(), dz, dx, h, h);
    }

    // through the input tanh
    const double * x0 = ws.xs.data();
    for (int64_t i = 0; i < h; ++i) {
        dx[i] *= 1.0 - x0[i] * x0[i];
    }
    add_outer(grads.params[(size_t) L.input_w].values.data(),
              grads.params[(size_t) L.input_b].values.data(), dx, ws.embed.data(), h, C * d);

    double * de = ws.dembed.data();
    for (int64_t i = 0; i < C * d; ++i) {
        de[i] = 0.0;
    }
    add_matvec_t(m.params[(size_t) L.input_w].values.data(), dx, de, h, C * d);

    double * demb = grads.params[(size_t) L.embedding].values.data();
    for (int64_t j = 0; j < C; ++j) {
        double * row = demb + (int64_t) ctx[j] * d;
        const double * src = de + j * d;
        for (int64_t i = 0; i < d; ++i) {
            row[i] += src[i];
        }
    }
}

} // namespace

ModelState init_model(const ArchConfig & arch, uint64_t seed) {
    ModelState m = make_empty_model(arch);
    Rng rng(seed);
    for (ParamTensor & t : m.params) {
        if (t.name.ends_with(".bias")) {
            continue; // biases stay zero
        }
        for (double & v : t.values) {
            v = rng.uniform(-0.05, 0.05);
        }
    }
    return m;
}

LossResult loss_and_grads(const ModelState & model, const std::vector<Sample> & batch) {
    model.arch.validate();
    if (batch.empty()) {
        throw std::invalid_argument("loss_and_grads: empty batch");
    }
    for (const Sample & s : batch) {
        check_sample(model.arch, s);
    }

    const ParamLayout layout(model.arch);
    Workspace ws(model.arch);
    LossResult out;
    out.grads = make_zero_gradients(model);

    double nll_sum = 0.0;
    for (const Sample & s : batch) {
        nll_sum += forward_one(model, layout, ws, s.context.data(), s.target);
        backward_one(model, layout, ws, s.context.data(), s.target, out.grads);
    }

    const double inv = 1.0 / (double) batch.size();
    out.mean_nll = nll_sum / (double) batch.size();
    for (ParamTensor & g : out.grads.params) {
        for (double & v : g.values) {
            v *= inv;
        }
    }
    return out;
}

double batch_mean_nll(const ModelState & model, const std::vector<Sample> & batch) {
    model.arch.validate();
    if (batch.empty()) {
        throw std::invalid_argument("batch_mean_nll: empty batch");
    }
    for (const Sample & s : batch) {
        check_sample(model.arch, s);
    }
    const ParamLayout layout(model.arch);
    Workspace ws(model.arch);
    double nll_sum = 0.0;
    for (const Sample & s : batch) {
        nll_sum += forward_one(model, layout, ws, s.context.data(), s.target);
    }
    return nll_sum / (double) batch.size();
}

Gradients proximal_adjust(const Gradients & grads, const ModelState & current,
                          const ModelState & anchor, double mu) {
    if (mu < 0.0) {
        throw std::invalid_argument("proximal_adjust: mu must be >= 0");
    }
    if (!same_structure(current, anchor)) {
        throw std::invalid_argument("proximal_adjust: current and anchor differ in structure");
    }
    if (grads.params.size() != current.params.size()) {
        throw std::invalid_argument("proximal_adjust: gradient/model shape mismatch");
    }
    Gradients out = grads;
    if (mu == 0.0) {
        return out;
    }
    for (size_t p = 0; p < out.params.size(); ++p) {
        if (out.params[p].values.size() != current.params[p].values.size()) {
            throw std::invalid_argument("proximal_adjust: gradient/model shape mismatch");
        }
        double * g = out.params[p].values.data();
        const double * c = current.params[p].values.data();
        const double * a = anchor.params[p].values.data();
        const size_t n = out.params[p].values.size();
        for (size_t i = 0; i < n; ++i) {
            const double adj = mu * (c[i] - a[i]);
            if (adj != 0.0) {
                g[i] += adj;
            }
        }
    }
    return out;
}

ModelState local_update(const ModelState & global, const TokenShard & shard,
                        const LocalUpdateConfig & cfg, uint64_t seed) {
    global.arch.validate();
    if (cfg.epochs < 0) {
        throw std::invalid_argument("local_update: negative epoch count");
    }
    const int C = (int) global.arch.context_len;
    if (shard.tokens.size() < (size_t) C + 1) {
        throw std::invalid_argument("local_update: shard too short for one training example");
    }

    ModelState current = global;
    if (cfg.epochs == 0 || cfg.eta == 0.0) {
        return current;
    }

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const uint64_t epoch_seed = derive_seed(seed, "epoch", (uint64_t) epoch);
        for (const std::vector<Sample> & batch : batches(shard, C, cfg.seq_len, cfg.batch_size, epoch_seed)) {
            LossResult res = loss_and_grads(current, batch);
            Gradients & g = res.grads;
            if (cfg.mu != 0.0) {
                g = proximal_adjust(g, current, global, cfg.mu);
            }
            for (size_t p = 0; p < current.params.size(); ++p) {
                double * w = current.params[p].values.data();
                const double * gv = g.params[p].values.data();
                const size_t n = current.params[p].values.size();
                for (size_t i = 0; i < n; ++i) {
                    w[i] -= cfg.eta * gv[i];
                }
            }
        }
    }
    return current;
}

double perplexity(const ModelState & model, const std::vector<token_id> & tokens, int seq_len) {
    model.arch.validate();
    const int64_t C = model.arch.context_len;
    if (seq_len < (int) C + 1) {
        throw std::invalid_argument("perplexity: seq_len must cover one context window plus a target");
    }
    if ((int64_t) tokens.size() < C + 1) {
        throw std::invalid_argument("perplexity: token stream too short");
    }
    for (token_id t : tokens) {
        if (t < 0 || (int64_t) t >= model.arch.vocab_size) {
            throw std::out_of_range("perplexity: token id out of vocabulary range");
        }
    }

    const ParamLayout layout(model.arch);
    Workspace ws(model.arch);
    double nll_sum = 0.0;
    const int64_t n = (int64_t) tokens.size();
    for (int64_t t = C; t < n; ++t) {
        nll_sum += forward_one(model, layout, ws, tokens.data() + (t - C), tokens[(size_t) t]);
    }
    return std::exp(nll_sum / (double) (n - C));
}

} // namespace fedsim
