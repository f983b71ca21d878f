#include "p3seg/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "json.hpp"
#include "p3seg/errors.hpp"
#include "p3seg/losses.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace p3seg {

namespace {

// o[x] += k0*r[x-1] + k1*r[x] + k2*r[x+1], zero padding at both ends.
inline void accum_row3(double* __restrict o, const double* __restrict r, double k0,
                       double k1, double k2, int W) {
    if (W == 1) {
        o[0] += k1 * r[0];
        return;
    }
    o[0] += k1 * r[0] + k2 * r[1];
    for (int x = 1; x < W - 1; ++x) o[x] += k0 * r[x - 1] + k1 * r[x] + k2 * r[x + 1];
    o[W - 1] += k0 * r[W - 2] + k1 * r[W - 1];
}

// acc[0] += sum g[x]*r[x-1]; acc[1] += sum g[x]*r[x]; acc[2] += sum g[x]*r[x+1].
inline void corr_row3(const double* __restrict g, const double* __restrict r, int W,
                      double* acc) {
    double a0 = 0.0, a1 = 0.0, a2 = 0.0;
    for (int x = 1; x < W; ++x) a0 += g[x] * r[x - 1];
    for (int x = 0; x < W; ++x) a1 += g[x] * r[x];
    for (int x = 0; x < W - 1; ++x) a2 += g[x] * r[x + 1];
    acc[0] += a0;
    acc[1] += a1;
    acc[2] += a2;
}

void conv3x3_forward(const double* w, const double* b, const Tensor& in, Tensor& out) {
    const int IC = in.channels, H = in.height, W = in.width, OC = out.channels;
    for (int oc = 0; oc < OC; ++oc) {
        double* op = out.plane(oc);
        const double bias = b[oc];
        for (int i = 0; i < H * W; ++i) op[i] = bias;
        for (int ic = 0; ic < IC; ++ic) {
            const double* K = w + (static_cast<std::size_t>(oc) * IC + ic) * 9;
            const double* ip = in.plane(ic);
            for (int y = 0; y < H; ++y) {
                double* orow = op + static_cast<std::size_t>(y) * W;
                if (y > 0) accum_row3(orow, ip + static_cast<std::size_t>(y - 1) * W, K[0], K[1], K[2], W);
                accum_row3(orow, ip + static_cast<std::size_t>(y) * W, K[3], K[4], K[5], W);
                if (y + 1 < H) accum_row3(orow, ip + static_cast<std::size_t>(y + 1) * W, K[6], K[7], K[8], W);
            }
        }
    }
}

// Accumulates weight/bias gradients and (optionally) the input gradient.
void conv3x3_backward(const double* w, const Tensor& in, const Tensor& gout,
                      double* gw, double* gb, Tensor* gin) {
    const int IC = in.channels, H = in.height, W = in.width, OC = gout.channels;
    for (int oc = 0; oc < OC; ++oc) {
        const double* gp = gout.plane(oc);
        double gbias = 0.0;
        for (int i = 0; i < H * W; ++i) gbias += gp[i];
        gb[oc] += gbias;

        for (int ic = 0; ic < IC; ++ic) {
            double* gk = gw + (static_cast<std::size_t>(oc) * IC + ic) * 9;
            const double* ip = in.plane(ic);
            for (int y = 0; y < H; ++y) {
                const double* grow = gp + static_cast<std::size_t>(y) * W;
                if (y > 0) corr_row3(grow, ip + static_cast<std::size_t>(y - 1) * W, W, gk + 0);
                corr_row3(grow, ip + static_cast<std::size_t>(y) * W, W, gk + 3);
                if (y + 1 < H) corr_row3(grow, ip + static_cast<std::size_t>(y + 1) * W, W, gk + 6);
            }
            if (gin) {
                const double* K = w + (static_cast<std::size_t>(oc) * IC + ic) * 9;
                double* gip = gin->plane(ic);
                for (int y = 0; y < H; ++y) {
                    const double* grow = gp + static_cast<std::size_t>(y) * W;
                    // scatter with the kernel flipped in both axes
                    if (y > 0)
                        accum_row3(gip + static_cast<std::size_t>(y - 1) * W, grow, K[2], K[1], K[0], W);
                    accum_row3(gip + static_cast<std::size_t>(y) * W, grow, K[5], K[4], K[3], W);
                    if (y + 1 < H)
                        accum_row3(gip + static_cast<std::size_t>(y + 1) * W, grow, K[8], K[7], K[6], W);
                }
            }
        }
    }
}

void conv1x1_forward(const double* w, const double* b, const Tensor& in, Tensor& out) {
    const int IC = in.channels, HW = in.height * in.width, OC = out.channels;
    for (int oc = 0; oc < OC; ++oc) {
        double* op = out.plane(oc);
        for (int i = 0; i < HW; ++i) op[i] = b[oc];
        for (int ic = 0; ic < IC; ++ic) {
            const double k = w[static_cast<std::size_t>(oc) * IC + ic];
            const double* ip = in.plane(ic);
            for (int i = 0; i < HW; ++i) op[i] += k * ip[i];
        }
    }
}

void conv1x1_backward(const double* w, const Tensor& in, const Tensor& gout,
                      double* gw, double* gb, Tensor* gin) {
    const int IC = in.channels, HW = in.height * in.width, OC = gout.channels;
    for (int oc = 0; oc < OC; ++oc) {
        const double* gp = gout.plane(oc);
        double gbias = 0.0;
        for (int i = 0; i < HW; ++i) gbias += gp[i];
        gb[oc] += gbias;
        for (int ic = 0; ic < IC; ++ic) {
            const double* ip = in.plane(ic);
            double acc = 0.0;
            for (int i = 0; i < HW; ++i) acc += gp[i] * ip[i];
            gw[static_cast<std::size_t>(oc) * IC + ic] += acc;
            if (gin) {
                double* gip = gin->plane(ic);
                const double k = w[static_cast<std::size_t>(oc) * IC + ic];
                for (int i = 0; i < HW; ++i) gip[i] += k * gp[i];
            }
        }
    }
}

Tensor maxpool2(const Tensor& in, std::vector<int>& argmax) {
    const int C = in.channels, H = in.height, W = in.width;
    Tensor out(C, H / 2, W / 2);
    argmax.assign(out.size(), 0);
    std::size_t oidx = 0;
    for (int c = 0; c < C; ++c)
        for (int y = 0; y < H; y += 2)
            for (int x = 0; x < W; x += 2) {
                int by = y, bx = x;
                double bv = in.at(c, y, x);
                // scan order breaks ties toward the first cell
                if (in.at(c, y, x + 1) > bv) { bv = in.at(c, y, x + 1); by = y; bx = x + 1; }
                if (in.at(c, y + 1, x) > bv) { bv = in.at(c, y + 1, x); by = y + 1; bx = x; }
                if (in.at(c, y + 1, x + 1) > bv) { bv = in.at(c, y + 1, x + 1); by = y + 1; bx = x + 1; }
                out.data[oidx] = bv;
                argmax[oidx] = (c * H + by) * W + bx;
                ++oidx;
            }
    return out;
}

Tensor upsample2(const Tensor& in) {
    const int C = in.channels, H = in.height, W = in.width;
    Tensor out(C, H * 2, W * 2);
    for (int c = 0; c < C; ++c)
        for (int y = 0; y < H * 2; ++y) {
            const double* irow = in.plane(c) + static_cast<std::size_t>(y / 2) * W;
            double* orow = out.plane(c) + static_cast<std::size_t>(y) * (W * 2);
            for (int x = 0; x < W * 2; ++x) orow[x] = irow[x / 2];
        }
    return out;
}

Tensor upsample2_backward(const Tensor& g) {
    const int C = g.channels, H = g.height / 2, W = g.width / 2;
    Tensor out(C, H, W);
    for (int c = 0; c < C; ++c)
        for (int y = 0; y < g.height; ++y) {
            const double* grow = g.plane(c) + static_cast<std::size_t>(y) * g.width;
            double* orow = out.plane(c) + static_cast<std::size_t>(y / 2) * W;
            for (int x = 0; x < g.width; ++x) orow[x / 2] += grow[x];
        }
    return out;
}

inline void relu_inplace(Tensor& t) {
    for (double& v : t.data)
        if (v < 0.0) v = 0.0;
}

void check_spec(const NetworkSpec& spec) {
    if (spec.class_count < 2) throw config_error("network needs at least 2 classes");
    if (spec.widths.empty()) throw config_error("network needs at least one level");
    for (int w : spec.widths)
        if (w < 1) throw config_error("channel widths must be positive");
}

} // namespace

ModelParams build_model(const NetworkSpec& spec, Rng& rng) {
    check_spec(spec);
    ModelParams mp;
    mp.spec = spec;
    const int L = spec.levels();

    auto add_layer = [&mp](LayerDesc::Kind kind, int in_ch, int out_ch) {
        LayerDesc d;
        d.kind = kind;
        d.in_ch = in_ch;
        d.out_ch = out_ch;
        d.w_off = mp.values.size();
        mp.values.resize(mp.values.size() + d.weight_count());
        d.b_off = mp.values.size();
        mp.values.resize(mp.values.size() + out_ch);
        mp.layers.push_back(d);
    };

    for (int i = 0; i < L; ++i)
        add_layer(LayerDesc::Kind::conv3x3, i == 0 ? spec.in_channels : spec.widths[i - 1],
                  spec.widths[i]);
    for (int j = L - 2; j >= 0; --j) {
        const int deep_ch = (j == L - 2) ? spec.widths[L - 1] : spec.widths[j + 1];
        add_layer(LayerDesc::Kind::conv3x3, deep_ch + spec.widths[j], spec.widths[j]);
    }
    add_layer(LayerDesc::Kind::conv1x1, spec.widths[0], spec.class_count);

    for (const LayerDesc& d : mp.layers) {
        const int k = d.kind == LayerDesc::Kind::conv3x3 ? 9 : 1;
        const double scale = 1.0 / std::sqrt(static_cast<double>(d.in_ch) * k);
        for (std::size_t i = 0; i < d.weight_count(); ++i)
            mp.values[d.w_off + i] = rng.normal() * scale;
        // biases stay zero
    }
    return mp;
}

Tensor forward(const ModelParams& params, const Tensor& image, ForwardCache* cache) {
    const NetworkSpec& spec = params.spec;
    const int L = spec.levels();
    if (image.channels != spec.in_channels)
        throw dimension_error("forward: image channel count mismatch");
    const int div = 1 << (L - 1);
    if (image.height % div != 0 || image.width % div != 0 || image.height < div ||
        image.width < div)
        throw dimension_error("forward: image size not divisible by 2^(levels-1)");

    ForwardCache local;
    ForwardCache& c = cache ? *cache : local;
    c = ForwardCache{};
    c.params_version = params.version;
    c.input = image;
    c.enc_pre.resize(L);
    c.enc_act.resize(L);
    c.pooled.resize(L);
    c.pool_arg.resize(L > 1 ? L - 1 : 0);
    if (L > 1) {
        c.dec_in.resize(L - 1);
        c.dec_pre.resize(L - 1);
        c.dec_act.resize(L - 1);
    }

    auto w = [&](std::size_t i) { return params.values.data() + params.layers[i].w_off; };
    auto b = [&](std::size_t i) { return params.values.data() + params.layers[i].b_off; };

    // encoder
    const Tensor* x = &image;
    for (int i = 0; i < L; ++i) {
        if (i > 0) {
            c.pooled[i] = maxpool2(c.enc_act[i - 1], c.pool_arg[i - 1]);
            x = &c.pooled[i];
        }
        c.enc_pre[i] = Tensor(spec.widths[i], x->height, x->width);
        conv3x3_forward(w(i), b(i), *x, c.enc_pre[i]);
        c.enc_act[i] = c.enc_pre[i];
        relu_inplace(c.enc_act[i]);
    }

    // decoder, deep to shallow; layer index L + (L-2-j) holds decoder j
    const Tensor* deep = &c.enc_act[L - 1];
    for (int j = L - 2; j >= 0; --j) {
        const std::size_t li = static_cast<std::size_t>(L) + (L - 2 - j);
        const Tensor up = upsample2(*deep);
        Tensor cat(up.channels + spec.widths[j], up.height, up.width);
        std::memcpy(cat.data.data(), up.data.data(), up.size() * sizeof(double));
        std::memcpy(cat.data.data() + up.size(), c.enc_act[j].data.data(),
                    c.enc_act[j].size() * sizeof(double));
        c.dec_in[j] = std::move(cat);
        c.dec_pre[j] = Tensor(spec.widths[j], up.height, up.width);
        conv3x3_forward(w(li), b(li), c.dec_in[j], c.dec_pre[j]);
        c.dec_act[j] = c.dec_pre[j];
        relu_inplace(c.dec_act[j]);
        deep = &c.dec_act[j];
    }

    const std::size_t head = params.layers.size() - 1;
    Tensor logits(spec.class_count, deep->height, deep->width);
    conv1x1_forward(w(head), b(head), *deep, logits);
    return logits;
}

std::vector<double> backward(const ModelParams& params, const ForwardCache& cache,
                             const Tensor& grad_logits) {
    if (cache.params_version != params.version)
        throw contract_error("backward: forward cache is stale");

    const NetworkSpec& spec = params.spec;
    const int L = spec.levels();
    std::vector<double> grads(params.values.size(), 0.0);

    auto w = [&](std::size_t i) { return params.values.data() + params.layers[i].w_off; };
    auto gw = [&](std::size_t i) { return grads.data() + params.layers[i].w_off; };
    auto gb = [&](std::size_t i) { return grads.data() + params.layers[i].b_off; };

    const Tensor& head_in = (L > 1) ? cache.dec_act[0] : cache.enc_act[0];
    const std::size_t head = params.layers.size() - 1;
    Tensor g_head_in(head_in.channels, head_in.height, head_in.width);
    conv1x1_backward(w(head), head_in, grad_logits, gw(head), gb(head), &g_head_in);

    std::vector<Tensor> g_enc_act(L);
    for (int i = 0; i < L; ++i)
        g_enc_act[i] = Tensor(spec.widths[i], cache.enc_act[i].height, cache.enc_act[i].width);

    // decoder chain, shallow to deep
    Tensor gx = std::move(g_head_in);
    for (int j = 0; j <= L - 2; ++j) {
        const std::size_t li = static_cast<std::size_t>(L) + (L - 2 - j);
        Tensor g_pre = std::move(gx);
        for (std::size_t i = 0; i < g_pre.data.size(); ++i)
            if (cache.dec_pre[j].data[i] <= 0.0) g_pre.data[i] = 0.0;

        Tensor g_cat(cache.dec_in[j].channels, g_pre.height, g_pre.width);
        conv3x3_backward(w(li), cache.dec_in[j], g_pre, gw(li), gb(li), &g_cat);

        const int deep_ch = g_cat.channels - spec.widths[j];
        Tensor g_up(deep_ch, g_cat.height, g_cat.width);
        std::memcpy(g_up.data.data(), g_cat.data.data(), g_up.size() * sizeof(double));
        for (std::size_t i = 0; i < g_enc_act[j].data.size(); ++i)
            g_enc_act[j].data[i] += g_cat.data[g_up.size() + i];

        Tensor g_src = upsample2_backward(g_up);
        if (j == L - 2) {
            for (std::size_t i = 0; i < g_src.data.size(); ++i)
                g_enc_act[L - 1].data[i] += g_src.data[i];
        } else {
            gx = std::move(g_src);
        }
    }
    if (L == 1) {
        for (std::size_t i = 0; i < g_enc_act[0].data.size(); ++i)
            g_enc_act[0].data[i] += gx.data[i];
    }

    // encoder chain, deep to shallow
    for (int i = L - 1; i >= 0; --i) {
        Tensor g_pre = std::move(g_enc_act[i]);
        for (std::size_t k = 0; k < g_pre.data.size(); ++k)
            if (cache.enc_pre[i].data[k] <= 0.0) g_pre.data[k] = 0.0;

        const Tensor& in = (i == 0) ? cache.input : cache.pooled[i];
        if (i == 0) {
            conv3x3_backward(w(i), in, g_pre, gw(i), gb(i), nullptr);
        } else {
            Tensor g_in(in.channels, in.height, in.width);
            conv3x3_backward(w(i), in, g_pre, gw(i), gb(i), &g_in);
            // route through the max-pool argmax
            const std::vector<int>& arg = cache.pool_arg[i - 1];
            for (std::size_t k = 0; k < g_in.data.size(); ++k)
                g_enc_act[i - 1].data[arg[k]] += g_in.data[k];
        }
    }
    return grads;
}

void adam_step(ModelParams& params, std::span<const double> grad, AdamState& state,
               double lr, double weight_decay) {
    const std::size_t n = params.values.size();
    if (grad.size() != n) throw contract_error("adam_step: gradient size mismatch");
    if (state.m.empty()) {
        state.m.assign(n, 0.0);
        state.v.assign(n, 0.0);
    }
    if (state.m.size() != n) throw contract_error("adam_step: state size mismatch");

    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    ++state.t;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < n; ++i) {
        const double g = grad[i];
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g;
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g;
        const double mh = state.m[i] / bc1;
        const double vh = state.v[i] / bc2;
        params.values[i] -= lr * (mh / (std::sqrt(vh) + eps) + weight_decay * params.values[i]);
    }
    ++params.version;
}

void ema_update(ModelParams& teacher, const ModelParams& student, double delta) {
    if (teacher.values.size() != student.values.size() || !(teacher.spec == student.spec))
        throw contract_error("ema_update: parameter layouts differ");
    if (!(delta >= 0.0 && delta <= 1.0)) throw config_error("ema_update: delta outside [0,1]");
    for (std::size_t i = 0; i < teacher.values.size(); ++i)
        teacher.values[i] = teacher.values[i] * delta + student.values[i] * (1.0 - delta);
    ++teacher.version;
}

LabelMap pseudo_label(const Tensor& logits, int class_count) {
    if (logits.channels != class_count)
        throw dimension_error("pseudo_label: channel count mismatch");
    if (class_count == 2) {
        const Tensor probs = softmax_probs(logits);
        LabelMap out(logits.height, logits.width);
        for (int y = 0; y < logits.height; ++y)
            for (int x = 0; x < logits.width; ++x)
                out.at(y, x) = probs.at(1, y, x) > 0.5 ? 1 : 0;
        return out;
    }
    return argmax_labels(logits);
}

namespace {
constexpr char kMagic[8] = {'P', '3', 'S', 'E', 'G', 'C', 'K', '1'};
} // namespace

void save_checkpoint(const ModelParams& params, const std::string& prefix,
                     std::uint64_t seed, long iter) {
    std::ofstream bin(prefix + ".bin", std::ios::binary | std::ios::trunc);
    if (!bin) throw format_error("cannot open checkpoint for writing: " + prefix + ".bin");

    bin.write(kMagic, 8);
    auto put_u32 = [&bin](std::uint32_t v) { bin.write(reinterpret_cast<const char*>(&v), 4); };
    put_u32(static_cast<std::uint32_t>(params.spec.in_channels));
    put_u32(static_cast<std::uint32_t>(params.spec.class_count));
    put_u32(static_cast<std::uint32_t>(params.spec.widths.size()));
    for (int wd : params.spec.widths) put_u32(static_cast<std::uint32_t>(wd));
    const std::uint64_t count = params.values.size();
    bin.write(reinterpret_cast<const char*>(&count), 8);
    bin.write(reinterpret_cast<const char*>(params.values.data()),
              static_cast<std::streamsize>(count * sizeof(double)));
    if (!bin) throw format_error("short write on checkpoint: " + prefix + ".bin");

    nlohmann::json side;
    side["spec"] = {{"in_channels", params.spec.in_channels},
                    {"class_count", params.spec.class_count},
                    {"widths", params.spec.widths}};
    side["seed"] = seed;
    side["iter"] = iter;
    side["param_count"] = count;
    std::ofstream js(prefix + ".json", std::ios::trunc);
    js << side.dump(2) << "\n";
}

ModelParams load_checkpoint(const std::string& prefix, std::uint64_t* seed, long* iter) {
    std::ifstream bin(prefix + ".bin", std::ios::binary);
    if (!bin) throw format_error("cannot open checkpoint: " + prefix + ".bin");

    char magic[8];
    bin.read(magic, 8);
    if (!bin || std::memcmp(magic, kMagic, 8) != 0)
        throw format_error("bad checkpoint magic: " + prefix + ".bin");

    auto get_u32 = [&bin]() {
        std::uint32_t v = 0;
        bin.read(reinterpret_cast<char*>(&v), 4);
        return v;
    };
    NetworkSpec spec;
    spec.in_channels = static_cast<int>(get_u32());
    spec.class_count = static_cast<int>(get_u32());
    const std::uint32_t levels = get_u32();
    if (!bin || levels == 0 || levels > 16) throw format_error("bad checkpoint header");
    spec.widths.resize(levels);
    for (std::uint32_t i = 0; i < levels; ++i) spec.widths[i] = static_cast<int>(get_u32());

    std::uint64_t count = 0;
    bin.read(reinterpret_cast<char*>(&count), 8);

    Rng dummy(0);
    ModelParams mp = build_model(spec, dummy);
    if (mp.values.size() != count) throw format_error("checkpoint parameter count mismatch");
    bin.read(reinterpret_cast<char*>(mp.values.data()),
             static_cast<std::streamsize>(count * sizeof(double)));
    if (!bin) throw format_error("truncated checkpoint: " + prefix + ".bin");

    std::ifstream js(prefix + ".json");
    if (js) {
        nlohmann::json side = nlohmann::json::parse(js, nullptr, false);
        if (!side.is_discarded()) {
            if (seed && side.contains("seed")) *seed = side["seed"].get<std::uint64_t>();
            if (iter && side.contains("iter")) *iter = side["iter"].get<long>();
        }
    }
    return mp;
}

} // namespace p3seg
