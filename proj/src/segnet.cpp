#include "octa/segnet.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <thread>

#include <zlib.h>

#include "octa/rng.hpp"

namespace octa {

std::size_t CnnModel::parameter_count() const {
    std::size_t n = 0;
    for (std::size_t i = 0; i < layers.size(); ++i)
        n += weights[i].size() + biases[i].size();
    return n;
}

std::vector<LayerSpec> default_architecture(int patch_side) {
    std::vector<LayerSpec> layers;
    layers.push_back(LayerSpec::conv(5, 5, 1, 16));
    layers.push_back(LayerSpec::relu());
    layers.push_back(LayerSpec::pool());
    layers.push_back(LayerSpec::conv(5, 5, 16, 32));
    layers.push_back(LayerSpec::relu());
    layers.push_back(LayerSpec::pool());
    const int c1 = patch_side - 4;
    const int p1 = c1 / 2;
    const int c2 = p1 - 4;
    const int p2 = c2 / 2;
    if (c1 < 2 || c2 < 2 || p2 < 1)
        throw ArgumentError("default_architecture: patch side too small");
    layers.push_back(LayerSpec::fc(32 * p2 * p2, 64));
    layers.push_back(LayerSpec::relu());
    layers.push_back(LayerSpec::fc(64, 2));
    layers.push_back(LayerSpec::softmax());
    return layers;
}

std::vector<TensorShape> plan_shapes(int patch_side, const std::vector<LayerSpec>& layers) {
    if (patch_side < 3 || patch_side % 2 == 0)
        throw ArgumentError("model: patch_side must be odd and >= 3");
    if (layers.empty())
        throw ArgumentError("model: no layers");
    std::vector<TensorShape> shapes;
    shapes.push_back({1, patch_side, patch_side});
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const LayerSpec& L = layers[i];
        const TensorShape& s = shapes.back();
        switch (L.kind) {
        case LayerKind::Conv: {
            if (L.in_ch != s.c)
                throw ArgumentError("model: conv input channels do not chain");
            const int oh = s.h - L.kh + 1;
            const int ow = s.w - L.kw + 1;
            if (L.kh < 1 || L.kw < 1 || L.out_ch < 1 || oh < 1 || ow < 1)
                throw ArgumentError("model: conv kernel does not fit its input");
            shapes.push_back({L.out_ch, oh, ow});
            break;
        }
        case LayerKind::Relu:
            shapes.push_back(s);
            break;
        case LayerKind::Pool: {
            if (s.h < 2 || s.w < 2)
                throw ArgumentError("model: pool input too small");
            shapes.push_back({s.c, s.h / 2, s.w / 2});
            break;
        }
        case LayerKind::Fc: {
            if (static_cast<std::size_t>(L.in) != s.size())
                throw ArgumentError("model: fc input size does not chain");
            if (L.out < 1)
                throw ArgumentError("model: fc output must be >= 1");
            shapes.push_back({L.out, 1, 1});
            break;
        }
        case LayerKind::Softmax: {
            if (i + 1 != layers.size())
                throw ArgumentError("model: softmax must be terminal");
            if (s.size() != 2)
                throw ArgumentError("model: softmax input must be the 2 class logits");
            shapes.push_back(s);
            break;
        }
        }
    }
    if (layers.back().kind != LayerKind::Softmax)
        throw ArgumentError("model: terminal layer must be softmax");
    return shapes;
}

CnnModel init_model(int patch_side, const std::vector<LayerSpec>& layers, std::uint64_t seed) {
    plan_shapes(patch_side, layers);
    CnnModel m;
    m.patch_side = patch_side;
    m.layers = layers;
    m.seed = seed;
    m.weights.resize(layers.size());
    m.biases.resize(layers.size());
    Rng rng(seed);
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const LayerSpec& L = layers[i];
        if (L.kind == LayerKind::Conv) {
            const std::size_t nw =
                static_cast<std::size_t>(L.out_ch) * L.in_ch * L.kh * L.kw;
            const double fan_in = static_cast<double>(L.kh) * L.kw * L.in_ch;
            const double fan_out = static_cast<double>(L.kh) * L.kw * L.out_ch;
            const double bound = std::sqrt(6.0 / (fan_in + fan_out));
            m.weights[i].resize(nw);
            for (auto& w : m.weights[i])
                w = rng.uniform(-bound, bound);
            m.biases[i].assign(static_cast<std::size_t>(L.out_ch), 0.0);
        } else if (L.kind == LayerKind::Fc) {
            const double bound = std::sqrt(6.0 / (L.in + L.out));
            m.weights[i].resize(static_cast<std::size_t>(L.out) * L.in);
            for (auto& w : m.weights[i])
                w = rng.uniform(-bound, bound);
            m.biases[i].assign(static_cast<std::size_t>(L.out), 0.0);
        }
    }
    return m;
}

namespace {

struct Workspace {
    std::vector<std::vector<double>> act;      // act[0] input .. act[L] probs
    std::vector<std::vector<int>> pool_arg;    // flat input index of each max
    std::vector<std::vector<double>> dact;
};

Workspace make_workspace(const std::vector<LayerSpec>& layers,
                         const std::vector<TensorShape>& shapes) {
    Workspace ws;
    ws.act.resize(shapes.size());
    ws.dact.resize(shapes.size());
    for (std::size_t i = 0; i < shapes.size(); ++i) {
        ws.act[i].assign(shapes[i].size(), 0.0);
        ws.dact[i].assign(shapes[i].size(), 0.0);
    }
    ws.pool_arg.resize(layers.size());
    for (std::size_t i = 0; i < layers.size(); ++i)
        if (layers[i].kind == LayerKind::Pool)
            ws.pool_arg[i].assign(shapes[i + 1].size(), 0);
    return ws;
}

// inner loops run over contiguous output columns so they vectorize
void conv_forward(const LayerSpec& L, const TensorShape& si, const TensorShape& so,
                  const double* in, const double* w, const double* b, double* out) {
    const int IH = si.h, IW = si.w, IC = si.c;
    const int OH = so.h, OW = so.w, OC = so.c;
    for (int oc = 0; oc < OC; ++oc) {
        for (int oy = 0; oy < OH; ++oy) {
            double* orow = out + (static_cast<std::size_t>(oc) * OH + oy) * OW;
            std::fill(orow, orow + OW, b[oc]);
            for (int ic = 0; ic < IC; ++ic) {
                for (int ky = 0; ky < L.kh; ++ky) {
                    const double* irow =
                        in + (static_cast<std::size_t>(ic) * IH + oy + ky) * IW;
                    const double* wrow =
                        w + ((static_cast<std::size_t>(oc) * IC + ic) * L.kh + ky) * L.kw;
                    for (int kx = 0; kx < L.kw; ++kx) {
                        const double wv = wrow[kx];
                        const double* __restrict ip = irow + kx;
                        double* __restrict op = orow;
                        for (int ox = 0; ox < OW; ++ox)
                            op[ox] += wv * ip[ox];
                    }
                }
            }
        }
    }
}

void conv_backward(const LayerSpec& L, const TensorShape& si, const TensorShape& so,
                   const double* in, const double* w, const double* dout, double* din,
                   double* dw, double* db) {
    const int IH = si.h, IW = si.w, IC = si.c;
    const int OH = so.h, OW = so.w, OC = so.c;
    std::fill(din, din + si.size(), 0.0);
    for (int oc = 0; oc < OC; ++oc) {
        for (int oy = 0; oy < OH; ++oy) {
            const double* grow = dout + (static_cast<std::size_t>(oc) * OH + oy) * OW;
            double gsum = 0.0;
            for (int ox = 0; ox < OW; ++ox)
                gsum += grow[ox];
            db[oc] += gsum;
            for (int ic = 0; ic < IC; ++ic) {
                for (int ky = 0; ky < L.kh; ++ky) {
                    const double* irow =
                        in + (static_cast<std::size_t>(ic) * IH + oy + ky) * IW;
                    double* drow = din + (static_cast<std::size_t>(ic) * IH + oy + ky) * IW;
                    const std::size_t wbase =
                        ((static_cast<std::size_t>(oc) * IC + ic) * L.kh + ky) * L.kw;
                    for (int kx = 0; kx < L.kw; ++kx) {
                        const double wv = w[wbase + kx];
                        double acc = 0.0;
                        const double* __restrict ip = irow + kx;
                        const double* __restrict gp = grow;
                        double* __restrict dp = drow + kx;
                        for (int ox = 0; ox < OW; ++ox) {
                            acc += gp[ox] * ip[ox];
                            dp[ox] += gp[ox] * wv;
                        }
                        dw[wbase + kx] += acc;
                    }
                }
            }
        }
    }
}

void forward_pass(const CnnModel& m, const std::vector<TensorShape>& shapes, Workspace& ws,
                  const double* patch) {
    std::copy(patch, patch + shapes[0].size(), ws.act[0].begin());
    for (std::size_t i = 0; i < m.layers.size(); ++i) {
        const LayerSpec& L = m.layers[i];
        const TensorShape& si = shapes[i];
        const TensorShape& so = shapes[i + 1];
        const double* in = ws.act[i].data();
        double* out = ws.act[i + 1].data();
        switch (L.kind) {
        case LayerKind::Conv:
            conv_forward(L, si, so, in, m.weights[i].data(), m.biases[i].data(), out);
            break;
        case LayerKind::Relu:
            for (std::size_t k = 0; k < si.size(); ++k)
                out[k] = in[k] > 0.0 ? in[k] : 0.0;
            break;
        case LayerKind::Pool: {
            int* arg = ws.pool_arg[i].data();
            for (int c = 0; c < si.c; ++c) {
                for (int y = 0; y < so.h; ++y) {
                    for (int x = 0; x < so.w; ++x) {
                        const int iy = 2 * y, ix = 2 * x;
                        std::size_t best =
                            (static_cast<std::size_t>(c) * si.h + iy) * si.w + ix;
                        double bv = in[best];
                        const std::size_t cand[3] = {best + 1, best + si.w, best + si.w + 1};
                        for (std::size_t q : cand) {
                            if (in[q] > bv) {
                                bv = in[q];
                                best = q;
                            }
                        }
                        const std::size_t o =
                            (static_cast<std::size_t>(c) * so.h + y) * so.w + x;
                        out[o] = bv;
                        arg[o] = static_cast<int>(best);
                    }
                }
            }
            break;
        }
        case LayerKind::Fc: {
            const double* w = m.weights[i].data();
            for (int o = 0; o < L.out; ++o) {
                double s = m.biases[i][o];
                const double* wr = w + static_cast<std::size_t>(o) * L.in;
                for (int k = 0; k < L.in; ++k)
                    s += wr[k] * in[k];
                out[o] = s;
            }
            break;
        }
        case LayerKind::Softmax: {
            const double mx = std::max(in[0], in[1]);
            const double e0 = std::exp(in[0] - mx);
            const double e1 = std::exp(in[1] - mx);
            out[0] = e0 / (e0 + e1);
            out[1] = e1 / (e0 + e1);
            break;
        }
        }
    }
}

// stable cross-entropy from the class logits (the softmax input)
double sample_loss(const Workspace& ws, std::size_t logits_index, int label) {
    const std::vector<double>& logits = ws.act[logits_index];
    const double mx = std::max(logits[0], logits[1]);
    const double lse = mx + std::log(std::exp(logits[0] - mx) + std::exp(logits[1] - mx));
    return lse - logits[label];
}

struct Grads {
    std::vector<std::vector<double>> w, b;
};

Grads make_grads(const CnnModel& m) {
    Grads g;
    g.w.resize(m.layers.size());
    g.b.resize(m.layers.size());
    for (std::size_t i = 0; i < m.layers.size(); ++i) {
        g.w[i].assign(m.weights[i].size(), 0.0);
        g.b[i].assign(m.biases[i].size(), 0.0);
    }
    return g;
}

void zero_grads(Grads& g) {
    for (auto& v : g.w)
        std::fill(v.begin(), v.end(), 0.0);
    for (auto& v : g.b)
        std::fill(v.begin(), v.end(), 0.0);
}

void backward_pass(const CnnModel& m, const std::vector<TensorShape>& shapes, Workspace& ws,
                   int label, Grads& g) {
    const std::size_t L = m.layers.size();
    // softmax + cross-entropy collapse to probs - onehot at the logits
    ws.dact[L - 1][0] = ws.act[L][0] - (label == 0 ? 1.0 : 0.0);
    ws.dact[L - 1][1] = ws.act[L][1] - (label == 1 ? 1.0 : 0.0);
    for (std::size_t idx = L - 1; idx-- > 0;) {
        const LayerSpec& spec = m.layers[idx];
        const TensorShape& si = shapes[idx];
        const TensorShape& so = shapes[idx + 1];
        const double* dout = ws.dact[idx + 1].data();
        double* din = ws.dact[idx].data();
        switch (spec.kind) {
        case LayerKind::Conv:
            conv_backward(spec, si, so, ws.act[idx].data(), m.weights[idx].data(), dout, din,
                          g.w[idx].data(), g.b[idx].data());
            break;
        case LayerKind::Relu:
            for (std::size_t k = 0; k < si.size(); ++k)
                din[k] = ws.act[idx + 1][k] > 0.0 ? dout[k] : 0.0;
            break;
        case LayerKind::Pool: {
            std::fill(din, din + si.size(), 0.0);
            const int* arg = ws.pool_arg[idx].data();
            for (std::size_t o = 0; o < so.size(); ++o)
                din[arg[o]] += dout[o];
            break;
        }
        case LayerKind::Fc: {
            const double* in = ws.act[idx].data();
            const double* w = m.weights[idx].data();
            std::fill(din, din + si.size(), 0.0);
            for (int o = 0; o < spec.out; ++o) {
                const double gd = dout[o];
                g.b[idx][o] += gd;
                double* gw = g.w[idx].data() + static_cast<std::size_t>(o) * spec.in;
                const double* wr = w + static_cast<std::size_t>(o) * spec.in;
                for (int k = 0; k < spec.in; ++k) {
                    gw[k] += gd * in[k];
                    din[k] += gd * wr[k];
                }
            }
            break;
        }
        case LayerKind::Softmax:
            break; // handled jointly with the loss
        }
    }
}

void check_patch_set(const CnnModel& m, const LabeledPatchSet& data) {
    if (data.patches.empty())
        throw ArgumentError("patch set is empty");
    if (data.patch_side != m.patch_side)
        throw ArgumentError("patch side does not match the model");
    const std::size_t want = static_cast<std::size_t>(m.patch_side) * m.patch_side;
    for (const auto& p : data.patches)
        if (p.values.size() != want || (p.label != 0 && p.label != 1))
            throw ArgumentError("malformed patch set entry");
}

} // namespace

LabeledPatchSet sample_balanced(const GrayImage& img, const BinaryMask& gt, int n_per_class,
                                std::uint64_t seed, int patch_side, int image_id) {
    if (gt.width() != img.width() || gt.height() != img.height())
        throw ArgumentError("sample_balanced: mask dimensions do not match image");
    if (n_per_class < 1)
        throw ArgumentError("sample_balanced: n_per_class must be >= 1");

    std::vector<std::pair<int, int>> vessel, background;
    for (int y = 0; y < gt.height(); ++y) {
        for (int x = 0; x < gt.width(); ++x) {
            if (!gt.roi().at(x, y))
                continue;
            (gt.vessel_at(x, y) ? vessel : background).emplace_back(x, y);
        }
    }
    if (static_cast<std::size_t>(n_per_class) > vessel.size())
        throw InsufficientClassPixelsError(
            "sample_balanced: only " + std::to_string(vessel.size()) + " vessel pixels, need " +
            std::to_string(n_per_class));
    if (static_cast<std::size_t>(n_per_class) > background.size())
        throw InsufficientClassPixelsError(
            "sample_balanced: only " + std::to_string(background.size()) +
            " non-vessel pixels, need " + std::to_string(n_per_class));

    Rng rng(seed);
    // partial Fisher-Yates: the first n entries are a uniform sample
    // without replacement
    auto draw = [&](std::vector<std::pair<int, int>>& pool, int n) {
        for (int i = 0; i < n; ++i) {
            const std::size_t j =
                i + static_cast<std::size_t>(rng.next_below(pool.size() - i));
            std::swap(pool[i], pool[j]);
        }
        pool.resize(static_cast<std::size_t>(n));
    };
    draw(vessel, n_per_class);
    draw(background, n_per_class);

    LabeledPatchSet set;
    set.patch_side = patch_side;
    set.patches.reserve(static_cast<std::size_t>(2) * n_per_class);
    for (const auto& [x, y] : vessel)
        set.patches.push_back({extract_patch(img, x, y, patch_side), 1, image_id, x, y});
    for (const auto& [x, y] : background)
        set.patches.push_back({extract_patch(img, x, y, patch_side), 0, image_id, x, y});
    return set;
}

std::array<double, 2> forward_probs(const CnnModel& model, const std::vector<double>& patch) {
    const auto shapes = plan_shapes(model.patch_side, model.layers);
    if (patch.size() != shapes[0].size())
        throw ArgumentError("forward: patch size does not match the model");
    Workspace ws = make_workspace(model.layers, shapes);
    forward_pass(model, shapes, ws, patch.data());
    return {ws.act.back()[0], ws.act.back()[1]};
}

double forward(const CnnModel& model, const std::vector<double>& patch) {
    return forward_probs(model, patch)[1];
}

double mean_loss(const CnnModel& model, const LabeledPatchSet& data) {
    check_patch_set(model, data);
    const auto shapes = plan_shapes(model.patch_side, model.layers);
    Workspace ws = make_workspace(model.layers, shapes);
    double total = 0.0;
    for (const auto& p : data.patches) {
        forward_pass(model, shapes, ws, p.values.data());
        total += sample_loss(ws, model.layers.size() - 1, p.label);
    }
    return total / static_cast<double>(data.patches.size());
}

TrainResult train(CnnModel model, const LabeledPatchSet& data, const TrainConfig& cfg) {
    check_patch_set(model, data);
    if (!(cfg.learning_rate > 0.0))
        throw ArgumentError("train: learning_rate must be positive");
    if (!(cfg.momentum >= 0.0 && cfg.momentum < 1.0))
        throw ArgumentError("train: momentum must be in [0,1)");
    if (cfg.batch_size < 1 || cfg.epochs < 1)
        throw ArgumentError("train: batch_size and epochs must be >= 1");

    const auto shapes = plan_shapes(model.patch_side, model.layers);
    Workspace ws = make_workspace(model.layers, shapes);
    Grads grads = make_grads(model);
    Grads vel = make_grads(model);

    const std::size_t n = data.patches.size();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i)
        order[i] = i;

    Rng rng(cfg.seed);
    TrainResult result;
    result.epoch_loss.reserve(static_cast<std::size_t>(cfg.epochs));
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (std::size_t i = n - 1; i > 0; --i) {
            const std::size_t j = rng.next_below(i + 1);
            std::swap(order[i], order[j]);
        }
        double loss_sum = 0.0;
        for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t stop = std::min(n, start + static_cast<std::size_t>(cfg.batch_size));
            zero_grads(grads);
            for (std::size_t k = start; k < stop; ++k) {
                const LabeledPatch& p = data.patches[order[k]];
                forward_pass(model, shapes, ws, p.values.data());
                loss_sum += sample_loss(ws, model.layers.size() - 1, p.label);
                backward_pass(model, shapes, ws, p.label, grads);
            }
            const double scale = 1.0 / static_cast<double>(stop - start);
            for (std::size_t li = 0; li < model.layers.size(); ++li) {
                for (std::size_t k = 0; k < model.weights[li].size(); ++k) {
                    vel.w[li][k] = cfg.momentum * vel.w[li][k] + grads.w[li][k] * scale;
                    model.weights[li][k] -= cfg.learning_rate * vel.w[li][k];
                }
                for (std::size_t k = 0; k < model.biases[li].size(); ++k) {
                    vel.b[li][k] = cfg.momentum * vel.b[li][k] + grads.b[li][k] * scale;
                    model.biases[li][k] -= cfg.learning_rate * vel.b[li][k];
                }
            }
        }
        const double epoch_loss = loss_sum / static_cast<double>(n);
        if (!std::isfinite(epoch_loss))
            throw DivergenceError("train: loss diverged at epoch " + std::to_string(epoch), epoch);
        result.epoch_loss.push_back(epoch_loss);
    }
    result.model = std::move(model);
    return result;
}

double grad_check(const CnnModel& model, const LabeledPatchSet& batch, double epsilon) {
    check_patch_set(model, batch);
    if (model.parameter_count() > 5000)
        throw ArgumentError("grad_check: model too large (> 5000 parameters)");
    if (!(epsilon >= 1e-7 && epsilon <= 1e-4))
        throw ArgumentError("grad_check: epsilon must be in [1e-7, 1e-4]");

    const auto shapes = plan_shapes(model.patch_side, model.layers);
    Workspace ws = make_workspace(model.layers, shapes);
    Grads grads = make_grads(model);
    const double inv_n = 1.0 / static_cast<double>(batch.patches.size());
    for (const auto& p : batch.patches) {
        forward_pass(model, shapes, ws, p.values.data());
        backward_pass(model, shapes, ws, p.label, grads);
    }

    CnnModel probe = model;
    double worst = 0.0;
    auto probe_param = [&](double& slot, double analytic) {
        const double saved = slot;
        slot = saved + epsilon;
        const double lp = mean_loss(probe, batch);
        slot = saved - epsilon;
        const double lm = mean_loss(probe, batch);
        slot = saved;
        const double numeric = (lp - lm) / (2.0 * epsilon);
        const double denom = std::max({std::fabs(analytic), std::fabs(numeric), 1e-12});
        worst = std::max(worst, std::fabs(analytic - numeric) / denom);
    };
    for (std::size_t li = 0; li < model.layers.size(); ++li) {
        for (std::size_t k = 0; k < probe.weights[li].size(); ++k)
            probe_param(probe.weights[li][k], grads.w[li][k] * inv_n);
        for (std::size_t k = 0; k < probe.biases[li].size(); ++k)
            probe_param(probe.biases[li][k], grads.b[li][k] * inv_n);
    }
    return worst;
}

ConfidenceMap infer_map(const CnnModel& model, const GrayImage& img, const RoiMask& roi,
                        int threads) {
    if (roi.width() != img.width() || roi.height() != img.height())
        throw ArgumentError("infer_map: ROI dimensions do not match image");
    const auto shapes = plan_shapes(model.patch_side, model.layers);
    const int w = img.width();
    const int h = img.height();
    std::vector<double> values(static_cast<std::size_t>(w) * h, 0.0);

    auto run_rows = [&](int y0, int y1, Workspace& ws) {
        std::vector<double> patch;
        for (int y = y0; y < y1; ++y) {
            for (int x = 0; x < w; ++x) {
                if (!roi.at(x, y))
                    continue;
                patch = extract_patch(img, x, y, model.patch_side);
                forward_pass(model, shapes, ws, patch.data());
                values[static_cast<std::size_t>(y) * w + x] = ws.act.back()[1];
            }
        }
    };

    const int nt = std::max(1, std::min(threads, h));
    if (nt == 1) {
        Workspace ws = make_workspace(model.layers, shapes);
        run_rows(0, h, ws);
    } else {
        std::vector<Workspace> wss;
        wss.reserve(static_cast<std::size_t>(nt));
        for (int t = 0; t < nt; ++t)
            wss.push_back(make_workspace(model.layers, shapes));
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(nt));
        for (int t = 0; t < nt; ++t) {
            const int y0 = static_cast<int>(static_cast<long long>(t) * h / nt);
            const int y1 = static_cast<int>(static_cast<long long>(t + 1) * h / nt);
            pool.emplace_back(run_rows, y0, y1, std::ref(wss[static_cast<std::size_t>(t)]));
        }
        for (auto& th : pool)
            th.join();
    }
    return ConfidenceMap{w, h, std::move(values), roi};
}

SplitHalfResult split_half_cv(const std::vector<CvEntry>& dataset, const TrainConfig& cfg,
                              const SplitHalfOptions& opt) {
    if (dataset.size() < 2)
        throw ArgumentError("split_half_cv: dataset must contain at least 2 images");
    const std::vector<LayerSpec> arch =
        opt.arch.empty() ? default_architecture(opt.patch_side) : opt.arch;
    const std::size_t half = (dataset.size() + 1) / 2;

    auto build_set = [&](std::size_t begin, std::size_t end) {
        LabeledPatchSet set;
        set.patch_side = opt.patch_side;
        const int quota =
            std::max(1, opt.patches_per_class / static_cast<int>(end - begin));
        for (std::size_t i = begin; i < end; ++i) {
            const CvEntry& e = dataset[i];
            std::size_t vessel = 0, background = 0;
            for (int y = 0; y < e.gt.height(); ++y)
                for (int x = 0; x < e.gt.width(); ++x)
                    if (e.gt.roi().at(x, y))
                        ++(e.gt.vessel_at(x, y) ? vessel : background);
            const int n = std::min<std::size_t>(
                {static_cast<std::size_t>(quota), vessel, background});
            if (n < 1)
                throw InsufficientClassPixelsError("split_half_cv: image '" + e.id +
                                                   "' lacks pixels of one class");
            LabeledPatchSet part =
                sample_balanced(e.image, e.gt, n, cfg.seed + 1000 + i, opt.patch_side,
                                static_cast<int>(i));
            for (auto& p : part.patches)
                set.patches.push_back(std::move(p));
        }
        return set;
    };

    SplitHalfResult res;
    const LabeledPatchSet set_a = build_set(0, half);
    const LabeledPatchSet set_b = build_set(half, dataset.size());

    TrainResult ta = train(init_model(opt.patch_side, arch, cfg.seed + 1), set_a, cfg);
    TrainResult tb = train(init_model(opt.patch_side, arch, cfg.seed + 2), set_b, cfg);
    ta.model.meta = opt.model_meta;
    ta.model.meta["fold"] = "A";
    tb.model.meta = opt.model_meta;
    tb.model.meta["fold"] = "B";

    res.maps.reserve(dataset.size());
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        const CnnModel& m = i < half ? tb.model : ta.model; // never trained on image i
        res.maps.push_back(infer_map(m, dataset[i].image, dataset[i].gt.roi(), opt.threads));
        (i < half ? res.fold_a_ids : res.fold_b_ids).push_back(dataset[i].id);
    }
    res.model_a = std::move(ta.model);
    res.model_b = std::move(tb.model);
    res.loss_a = std::move(ta.epoch_loss);
    res.loss_b = std::move(tb.epoch_loss);
    return res;
}

// --- persistence ---

namespace {

constexpr char kMagic[9] = "OCTANET1";

void put_u64_le(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i)
        out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64_le(const unsigned char* p) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
        v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
}

std::uint64_t double_bits(double d) {
    std::uint64_t v;
    std::memcpy(&v, &d, 8);
    return v;
}

double bits_double(std::uint64_t v) {
    double d;
    std::memcpy(&d, &v, 8);
    return d;
}

} // namespace

std::string arch_to_string(const std::vector<LayerSpec>& layers) {
    std::ostringstream os;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        if (i)
            os << "|";
        const LayerSpec& L = layers[i];
        switch (L.kind) {
        case LayerKind::Conv:
            os << "conv:" << L.kh << "x" << L.kw << "x" << L.in_ch << "x" << L.out_ch;
            break;
        case LayerKind::Relu:
            os << "relu";
            break;
        case LayerKind::Pool:
            os << "pool";
            break;
        case LayerKind::Fc:
            os << "fc:" << L.in << "x" << L.out;
            break;
        case LayerKind::Softmax:
            os << "softmax";
            break;
        }
    }
    return os.str();
}

std::vector<LayerSpec> arch_from_string(const std::string& s) {
    std::vector<LayerSpec> layers;
    std::stringstream ss(s);
    std::string tok;
    auto parse_dims = [](const std::string& t, int want) {
        std::vector<int> dims;
        std::stringstream ds(t);
        std::string d;
        while (std::getline(ds, d, 'x')) {
            try {
                dims.push_back(std::stoi(d));
            } catch (const std::exception&) {
                throw FormatError("arch: bad dimension '" + d + "'");
            }
        }
        if (static_cast<int>(dims.size()) != want)
            throw FormatError("arch: wrong dimension count in '" + t + "'");
        return dims;
    };
    while (std::getline(ss, tok, '|')) {
        if (tok == "relu") {
            layers.push_back(LayerSpec::relu());
        } else if (tok == "pool") {
            layers.push_back(LayerSpec::pool());
        } else if (tok == "softmax") {
            layers.push_back(LayerSpec::softmax());
        } else if (tok.rfind("conv:", 0) == 0) {
            const auto d = parse_dims(tok.substr(5), 4);
            layers.push_back(LayerSpec::conv(d[0], d[1], d[2], d[3]));
        } else if (tok.rfind("fc:", 0) == 0) {
            const auto d = parse_dims(tok.substr(3), 2);
            layers.push_back(LayerSpec::fc(d[0], d[1]));
        } else {
            throw FormatError("arch: unknown layer '" + tok + "'");
        }
    }
    if (layers.empty())
        throw FormatError("arch: empty descriptor");
    return layers;
}

void save_model(const CnnModel& model, const std::string& path) {
    plan_shapes(model.patch_side, model.layers);
    for (const auto& [k, v] : model.meta)
        if (k.find('\n') != std::string::npos || v.find('\n') != std::string::npos ||
            k.find('=') != std::string::npos)
            throw ArgumentError("save_model: metadata keys/values must be single-line");

    std::string payload;
    payload.reserve(model.parameter_count() * 8);
    for (std::size_t li = 0; li < model.layers.size(); ++li) {
        for (double w : model.weights[li])
            put_u64_le(payload, double_bits(w));
        for (double b : model.biases[li])
            put_u64_le(payload, double_bits(b));
    }
    const std::uint32_t crc = static_cast<std::uint32_t>(
        crc32(crc32(0L, Z_NULL, 0), reinterpret_cast<const Bytef*>(payload.data()),
              static_cast<uInt>(payload.size())));

    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw IoError("cannot write '" + path + "'");
    out.write(kMagic, 8);
    out << "\n";
    out << "version=" << model.version << "\n";
    out << "patch_side=" << model.patch_side << "\n";
    out << "arch=" << arch_to_string(model.layers) << "\n";
    out << "seed=" << model.seed << "\n";
    for (const auto& [k, v] : model.meta)
        out << k << "=" << v << "\n";
    out << "end_header\n";
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    char crcb[4];
    for (int i = 0; i < 4; ++i)
        crcb[i] = static_cast<char>((crc >> (8 * i)) & 0xff);
    out.write(crcb, 4);
    if (!out)
        throw IoError("failed while writing '" + path + "'");
}

CnnModel load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot open '" + path + "'");
    std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (blob.size() < 9 || blob.compare(0, 8, kMagic, 8) != 0 || blob[8] != '\n')
        throw FormatError("model: bad magic in '" + path + "'");

    CnnModel m;
    std::size_t pos = 9;
    bool header_done = false;
    std::string arch_str;
    while (pos < blob.size()) {
        const std::size_t nl = blob.find('\n', pos);
        if (nl == std::string::npos)
            throw FormatError("model: truncated header in '" + path + "'");
        const std::string line = blob.substr(pos, nl - pos);
        pos = nl + 1;
        if (line == "end_header") {
            header_done = true;
            break;
        }
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw FormatError("model: malformed header line '" + line + "'");
        const std::string key = line.substr(0, eq);
        const std::string val = line.substr(eq + 1);
        if (key == "version") {
            if (val != "1")
                throw FormatError("model: unsupported version '" + val + "'");
            m.version = val;
        } else if (key == "patch_side") {
            m.patch_side = std::stoi(val);
        } else if (key == "arch") {
            arch_str = val;
        } else if (key == "seed") {
            m.seed = std::stoull(val);
        } else {
            m.meta[key] = val;
        }
    }
    if (!header_done)
        throw FormatError("model: truncated header in '" + path + "'");
    if (arch_str.empty() || m.patch_side == 0)
        throw FormatError("model: header missing arch or patch_side");
    m.layers = arch_from_string(arch_str);
    try {
        plan_shapes(m.patch_side, m.layers);
    } catch (const ArgumentError& e) {
        throw FormatError(std::string("model: shape error: ") + e.what());
    }

    m.weights.resize(m.layers.size());
    m.biases.resize(m.layers.size());
    for (std::size_t i = 0; i < m.layers.size(); ++i) {
        const LayerSpec& L = m.layers[i];
        if (L.kind == LayerKind::Conv) {
            m.weights[i].resize(static_cast<std::size_t>(L.out_ch) * L.in_ch * L.kh * L.kw);
            m.biases[i].resize(static_cast<std::size_t>(L.out_ch));
        } else if (L.kind == LayerKind::Fc) {
            m.weights[i].resize(static_cast<std::size_t>(L.out) * L.in);
            m.biases[i].resize(static_cast<std::size_t>(L.out));
        }
    }
    const std::size_t payload_bytes = m.parameter_count() * 8;
    if (blob.size() < pos + payload_bytes + 4)
        throw FormatError("model: truncated weight payload in '" + path + "'");

    const unsigned char* p = reinterpret_cast<const unsigned char*>(blob.data()) + pos;
    const std::uint32_t crc = static_cast<std::uint32_t>(
        crc32(crc32(0L, Z_NULL, 0), p, static_cast<uInt>(payload_bytes)));
    const unsigned char* cb = p + payload_bytes;
    const std::uint32_t stored = static_cast<std::uint32_t>(cb[0]) |
                                 (static_cast<std::uint32_t>(cb[1]) << 8) |
                                 (static_cast<std::uint32_t>(cb[2]) << 16) |
                                 (static_cast<std::uint32_t>(cb[3]) << 24);
    if (crc != stored)
        throw FormatError("model: checksum failure in '" + path + "'");

    for (std::size_t i = 0; i < m.layers.size(); ++i) {
        for (double& w : m.weights[i]) {
            w = bits_double(get_u64_le(p));
            p += 8;
        }
        for (double& b : m.biases[i]) {
            b = bits_double(get_u64_le(p));
            p += 8;
        }
    }
    return m;
}

} // namespace octa
