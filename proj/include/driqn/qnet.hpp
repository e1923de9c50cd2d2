#pragma once

// Implicit quantile network with a self-contained differentiable core.
// Parameters live in one flat vector; the output-layer slice boundaries are
// recorded so the robust-update machinery can address it directly. A scalar
// Q-network variant (same trunk, no quantile embedding) backs the DQN
// baseline. Gradients are exact reverse-mode, double precision throughout.

#include <cmath>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "driqn/common.hpp"
#include "driqn/noise.hpp"
#include "driqn/rng.hpp"
#include "driqn/world.hpp"

namespace driqn {

struct NetConfig {
    int obs_dim = 68;
    int hidden = 128;
    int n_cos = 64;
    int n_actions = 9;

    bool operator==(const NetConfig&) const = default;
};

namespace nn {

inline double silu(double z) { return z / (1.0 + std::exp(-z)); }

inline double silu_prime(double z) {
    const double s = 1.0 / (1.0 + std::exp(-z));
    return s * (1.0 + z * (1.0 - s));
}

// out = W x + b, W row-major [nout][nin]
inline void affine(const double* w, const double* b, const double* x, double* out,
                   int nout, int nin) {
    for (int o = 0; o < nout; ++o) {
        const double* row = w + static_cast<size_t>(o) * nin;
        double acc = b[o];
        for (int i = 0; i < nin; ++i) acc += row[i] * x[i];
        out[o] = acc;
    }
}

// dx = W^T dy
inline void affine_t(const double* w, const double* dy, double* dx, int nout, int nin) {
    std::fill(dx, dx + nin, 0.0);
    for (int o = 0; o < nout; ++o) {
        const double d = dy[o];
        if (d == 0.0) continue;
        const double* row = w + static_cast<size_t>(o) * nin;
        for (int i = 0; i < nin; ++i) dx[i] += row[i] * d;
    }
}

// gw += dy x^T, gb += dy
inline void accumulate(double* gw, double* gb, const double* dy, const double* x,
                       int nout, int nin) {
    for (int o = 0; o < nout; ++o) {
        const double d = dy[o];
        gb[o] += d;
        if (d == 0.0) continue;
        double* row = gw + static_cast<size_t>(o) * nin;
        for (int i = 0; i < nin; ++i) row[i] += d * x[i];
    }
}

}  // namespace nn

// Cosine embedding of quantile fractions: row i, column j = cos(pi * j * tau_i).
inline std::vector<double> embed_tau(const std::vector<double>& taus, int n_cos) {
    for (double t : taus)
        if (!(t >= 0.0 && t <= 1.0))
            throw std::invalid_argument("embed_tau: tau outside [0, 1]");
    std::vector<double> out(taus.size() * n_cos);
    for (size_t i = 0; i < taus.size(); ++i)
        for (int j = 0; j < n_cos; ++j)
            out[i * n_cos + j] = std::cos(M_PI * j * taus[i]);
    return out;
}

// Flat-parameter IQN: feature trunk obs->H->H, cosine branch n_cos->H, merge by
// element-wise product, head H->H->|A| with a linear output layer.
struct IqnNet {
    NetConfig cfg;
    std::vector<double> theta;
    // slice offsets into theta
    size_t w1 = 0, b1 = 0, w2 = 0, b2 = 0, wc = 0, bc = 0, w3 = 0, b3 = 0, w4 = 0, b4 = 0;
    size_t dim = 0;

    size_t head_offset() const { return w4; }
    size_t head_size() const { return dim - w4; }

    static IqnNet make(const NetConfig& cfg, Rng& rng) {
        IqnNet n;
        n.cfg = cfg;
        const size_t H = cfg.hidden, A = cfg.n_actions, O = cfg.obs_dim, C = cfg.n_cos;
        size_t off = 0;
        n.w1 = off; off += H * O;  n.b1 = off; off += H;
        n.w2 = off; off += H * H;  n.b2 = off; off += H;
        n.wc = off; off += H * C;  n.bc = off; off += H;
        n.w3 = off; off += H * H;  n.b3 = off; off += H;
        n.w4 = off; off += A * H;  n.b4 = off; off += A;
        n.dim = off;
        n.theta.resize(off);
        init_layer(n.theta, n.w1, H * O, n.b1, H, O, rng);
        init_layer(n.theta, n.w2, H * H, n.b2, H, H, rng);
        init_layer(n.theta, n.wc, H * C, n.bc, H, C, rng);
        init_layer(n.theta, n.w3, H * H, n.b3, H, H, rng);
        init_layer(n.theta, n.w4, A * H, n.b4, A, H, rng);
        return n;
    }

    static void init_layer(std::vector<double>& t, size_t woff, size_t wlen, size_t boff,
                           size_t blen, int fan_in, Rng& rng) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (size_t i = 0; i < wlen; ++i) t[woff + i] = rng.uniform(-bound, bound);
        for (size_t i = 0; i < blen; ++i) t[boff + i] = rng.uniform(-bound, bound);
    }

    const char* layer_name(size_t index) const {
        if (index < w2) return "feature1";
        if (index < wc) return "feature2";
        if (index < w3) return "cos_embed";
        if (index < w4) return "head_hidden";
        return "output";
    }

    void check_finite() const {
        for (size_t i = 0; i < dim; ++i)
            if (!std::isfinite(theta[i]))
                throw NumericalFault(std::string("non-finite parameter in layer ") +
                                     layer_name(i));
    }
};

// Cached pre-activations/activations for one (obs, tau-set) evaluation;
// sufficient to reproduce exact gradients for that evaluation.
struct IqnTrace {
    std::vector<double> x;
    std::vector<double> z1, h1, z2, h2;       // H each
    int n_tau = 0;
    std::vector<double> cosf;                 // n_tau x n_cos
    std::vector<double> zc, hc, m, z3, h3;    // n_tau x H each
};

// Quantile values for one encoded observation at the given fractions.
// Output layout: z[t * n_actions + a]. Deterministic given (params, x, taus).
inline void iqn_forward(const IqnNet& net, const std::vector<double>& x,
                        const std::vector<double>& taus, std::vector<double>& z_out,
                        IqnTrace* trace = nullptr) {
    const int H = net.cfg.hidden, A = net.cfg.n_actions, O = net.cfg.obs_dim, C = net.cfg.n_cos;
    const int N = static_cast<int>(taus.size());
    const double* th = net.theta.data();

    thread_local std::vector<double> z1, h1, z2, h2, cosf, zc, hc, m, z3, h3;
    z1.resize(H); h1.resize(H); z2.resize(H); h2.resize(H);
    cosf.resize(C); zc.resize(H); hc.resize(H); m.resize(H); z3.resize(H); h3.resize(H);

    nn::affine(th + net.w1, th + net.b1, x.data(), z1.data(), H, O);
    for (int i = 0; i < H; ++i) h1[i] = nn::silu(z1[i]);
    nn::affine(th + net.w2, th + net.b2, h1.data(), z2.data(), H, H);
    for (int i = 0; i < H; ++i) h2[i] = nn::silu(z2[i]);

    if (trace) {
        trace->x = x;
        trace->z1 = z1; trace->h1 = h1; trace->z2 = z2; trace->h2 = h2;
        trace->n_tau = N;
        trace->cosf.resize(static_cast<size_t>(N) * C);
        trace->zc.resize(static_cast<size_t>(N) * H);
        trace->hc.resize(static_cast<size_t>(N) * H);
        trace->m.resize(static_cast<size_t>(N) * H);
        trace->z3.resize(static_cast<size_t>(N) * H);
        trace->h3.resize(static_cast<size_t>(N) * H);
    }

    z_out.resize(static_cast<size_t>(N) * A);
    for (int t = 0; t < N; ++t) {
        for (int j = 0; j < C; ++j) cosf[j] = std::cos(M_PI * j * taus[t]);
        nn::affine(th + net.wc, th + net.bc, cosf.data(), zc.data(), H, C);
        for (int i = 0; i < H; ++i) hc[i] = nn::silu(zc[i]);
        for (int i = 0; i < H; ++i) m[i] = h2[i] * hc[i];
        nn::affine(th + net.w3, th + net.b3, m.data(), z3.data(), H, H);
        for (int i = 0; i < H; ++i) h3[i] = nn::silu(z3[i]);
        nn::affine(th + net.w4, th + net.b4, h3.data(), z_out.data() + static_cast<size_t>(t) * A, A, H);
        if (trace) {
            const size_t o = static_cast<size_t>(t) * H;
            std::memcpy(trace->cosf.data() + static_cast<size_t>(t) * C, cosf.data(), C * sizeof(double));
            std::memcpy(trace->zc.data() + o, zc.data(), H * sizeof(double));
            std::memcpy(trace->hc.data() + o, hc.data(), H * sizeof(double));
            std::memcpy(trace->m.data() + o, m.data(), H * sizeof(double));
            std::memcpy(trace->z3.data() + o, z3.data(), H * sizeof(double));
            std::memcpy(trace->h3.data() + o, h3.data(), H * sizeof(double));
        }
    }
}

// Accumulates d(loss)/d(theta) into grad, given d(loss)/d(quantile outputs)
// laid out like the forward output. grad must have size net.dim.
inline void iqn_backward(const IqnNet& net, const IqnTrace& trace,
                         const std::vector<double>& dz, std::vector<double>& grad) {
    const int H = net.cfg.hidden, A = net.cfg.n_actions, O = net.cfg.obs_dim, C = net.cfg.n_cos;
    const int N = trace.n_tau;
    const double* th = net.theta.data();
    double* g = grad.data();

    thread_local std::vector<double> dh3, dz3, dm, dhc, dzc, dh2, dz2, dh1, dz1;
    dh3.resize(H); dz3.resize(H); dm.resize(H); dhc.resize(H); dzc.resize(H);
    dh2.assign(H, 0.0); dz2.resize(H); dh1.resize(H); dz1.resize(H);

    for (int t = 0; t < N; ++t) {
        const double* dz4 = dz.data() + static_cast<size_t>(t) * A;
        const double* h3 = trace.h3.data() + static_cast<size_t>(t) * H;
        const double* z3 = trace.z3.data() + static_cast<size_t>(t) * H;
        const double* m = trace.m.data() + static_cast<size_t>(t) * H;
        const double* hc = trace.hc.data() + static_cast<size_t>(t) * H;
        const double* zc = trace.zc.data() + static_cast<size_t>(t) * H;
        const double* cosf = trace.cosf.data() + static_cast<size_t>(t) * C;

        nn::accumulate(g + net.w4, g + net.b4, dz4, h3, A, H);
        nn::affine_t(th + net.w4, dz4, dh3.data(), A, H);
        for (int i = 0; i < H; ++i) dz3[i] = dh3[i] * nn::silu_prime(z3[i]);
        nn::accumulate(g + net.w3, g + net.b3, dz3.data(), m, H, H);
        nn::affine_t(th + net.w3, dz3.data(), dm.data(), H, H);
        for (int i = 0; i < H; ++i) {
            dh2[i] += dm[i] * hc[i];
            dhc[i] = dm[i] * trace.h2[i];
        }
        for (int i = 0; i < H; ++i) dzc[i] = dhc[i] * nn::silu_prime(zc[i]);
        nn::accumulate(g + net.wc, g + net.bc, dzc.data(), cosf, H, C);
    }

    for (int i = 0; i < H; ++i) dz2[i] = dh2[i] * nn::silu_prime(trace.z2[i]);
    nn::accumulate(g + net.w2, g + net.b2, dz2.data(), trace.h1.data(), H, H);
    nn::affine_t(th + net.w2, dz2.data(), dh1.data(), H, H);
    for (int i = 0; i < H; ++i) dz1[i] = dh1[i] * nn::silu_prime(trace.z1[i]);
    nn::accumulate(g + net.w1, g + net.b1, dz1.data(), trace.x.data(), H, O);
}

// ---- Scalar Q-network (DQN baseline): obs->H->H->H->|A| ----

struct QNet {
    NetConfig cfg;  // n_cos unused
    std::vector<double> theta;
    size_t w1 = 0, b1 = 0, w2 = 0, b2 = 0, w3 = 0, b3 = 0, w4 = 0, b4 = 0;
    size_t dim = 0;

    size_t head_offset() const { return w4; }
    size_t head_size() const { return dim - w4; }

    static QNet make(const NetConfig& cfg, Rng& rng) {
        QNet n;
        n.cfg = cfg;
        const size_t H = cfg.hidden, A = cfg.n_actions, O = cfg.obs_dim;
        size_t off = 0;
        n.w1 = off; off += H * O; n.b1 = off; off += H;
        n.w2 = off; off += H * H; n.b2 = off; off += H;
        n.w3 = off; off += H * H; n.b3 = off; off += H;
        n.w4 = off; off += A * H; n.b4 = off; off += A;
        n.dim = off;
        n.theta.resize(off);
        IqnNet::init_layer(n.theta, n.w1, H * O, n.b1, H, O, rng);
        IqnNet::init_layer(n.theta, n.w2, H * H, n.b2, H, H, rng);
        IqnNet::init_layer(n.theta, n.w3, H * H, n.b3, H, H, rng);
        IqnNet::init_layer(n.theta, n.w4, A * H, n.b4, A, H, rng);
        return n;
    }

    void check_finite() const {
        for (size_t i = 0; i < dim; ++i)
            if (!std::isfinite(theta[i]))
                throw NumericalFault("non-finite parameter in scalar net");
    }
};

struct QTrace {
    std::vector<double> x, z1, h1, z2, h2, z3, h3;
};

inline void q_forward(const QNet& net, const std::vector<double>& x,
                      std::vector<double>& q_out, QTrace* trace = nullptr) {
    const int H = net.cfg.hidden, A = net.cfg.n_actions, O = net.cfg.obs_dim;
    const double* th = net.theta.data();
    thread_local std::vector<double> z1, h1, z2, h2, z3, h3;
    z1.resize(H); h1.resize(H); z2.resize(H); h2.resize(H); z3.resize(H); h3.resize(H);

    nn::affine(th + net.w1, th + net.b1, x.data(), z1.data(), H, O);
    for (int i = 0; i < H; ++i) h1[i] = nn::silu(z1[i]);
    nn::affine(th + net.w2, th + net.b2, h1.data(), z2.data(), H, H);
    for (int i = 0; i < H; ++i) h2[i] = nn::silu(z2[i]);
    nn::affine(th + net.w3, th + net.b3, h2.data(), z3.data(), H, H);
    for (int i = 0; i < H; ++i) h3[i] = nn::silu(z3[i]);
    q_out.resize(A);
    nn::affine(th + net.w4, th + net.b4, h3.data(), q_out.data(), A, H);

    if (trace) {
        trace->x = x;
        trace->z1 = z1; trace->h1 = h1; trace->z2 = z2; trace->h2 = h2;
        trace->z3 = z3; trace->h3 = h3;
    }
}

inline void q_backward(const QNet& net, const QTrace& trace, const std::vector<double>& dq,
                       std::vector<double>& grad) {
    const int H = net.cfg.hidden, A = net.cfg.n_actions, O = net.cfg.obs_dim;
    const double* th = net.theta.data();
    double* g = grad.data();
    thread_local std::vector<double> dh3, dz3, dh2, dz2, dh1, dz1;
    dh3.resize(H); dz3.resize(H); dh2.resize(H); dz2.resize(H); dh1.resize(H); dz1.resize(H);

    nn::accumulate(g + net.w4, g + net.b4, dq.data(), trace.h3.data(), A, H);
    nn::affine_t(th + net.w4, dq.data(), dh3.data(), A, H);
    for (int i = 0; i < H; ++i) dz3[i] = dh3[i] * nn::silu_prime(trace.z3[i]);
    nn::accumulate(g + net.w3, g + net.b3, dz3.data(), trace.h2.data(), H, H);
    nn::affine_t(th + net.w3, dz3.data(), dh2.data(), H, H);
    for (int i = 0; i < H; ++i) dz2[i] = dh2[i] * nn::silu_prime(trace.z2[i]);
    nn::accumulate(g + net.w2, g + net.b2, dz2.data(), trace.h1.data(), H, H);
    nn::affine_t(th + net.w2, dz2.data(), dh1.data(), H, H);
    for (int i = 0; i < H; ++i) dz1[i] = dh1[i] * nn::silu_prime(trace.z1[i]);
    nn::accumulate(g + net.w1, g + net.b1, dz1.data(), trace.x.data(), H, O);
}

// ---- Observation encoding ----

// Flat network input: [velocity/va, unit goal direction, distance/ga,
// 2*lidar - 1], every component roughly in [-1, 1]. The goal bearing is
// encoded as a unit vector so the steering signal keeps O(1) scale at any
// distance.
inline constexpr int kEncodedExtra = 5;  // input dim = kEncodedExtra + beams

inline void encode_observation(const Observation& obs, const ComponentRanges& ranges,
                               std::vector<double>& out) {
    out.resize(kEncodedExtra + obs.lidar.size());
    out[0] = obs.velocity.x / ranges.velocity_abs;
    out[1] = obs.velocity.y / ranges.velocity_abs;
    const double dist = obs.goal_rel.norm();
    out[2] = dist > 1e-9 ? obs.goal_rel.x / dist : 0.0;
    out[3] = dist > 1e-9 ? obs.goal_rel.y / dist : 0.0;
    out[4] = dist / ranges.goal_rel_abs;
    for (size_t i = 0; i < obs.lidar.size(); ++i)
        out[kEncodedExtra + i] = 2.0 * obs.lidar[i] - 1.0;
}

// ---- Checkpoint document ----
// Versioned binary layout, explicitly little-endian: header (dims, slice
// offsets), flat online/target parameters, named RNG states, resolved config.

namespace io {

inline void put_u32(std::string& s, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
inline void put_u64(std::string& s, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
inline void put_f64(std::string& s, double d) {
    std::uint64_t v;
    std::memcpy(&v, &d, 8);
    put_u64(s, v);
}
inline void put_str(std::string& s, const std::string& v) {
    put_u64(s, v.size());
    s += v;
}

struct Reader {
    const std::string& buf;
    size_t pos = 0;
    explicit Reader(const std::string& b) : buf(b) {}
    void need(size_t n) const {
        if (pos + n > buf.size()) throw ConfigError("checkpoint truncated");
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
        pos += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
        pos += 8;
        return v;
    }
    double f64() {
        const std::uint64_t v = u64();
        double d;
        std::memcpy(&d, &v, 8);
        return d;
    }
    std::string str() {
        const size_t n = u64();
        need(n);
        std::string v = buf.substr(pos, n);
        pos += n;
        return v;
    }
};

}  // namespace io

enum class NetKind : std::uint8_t { Iqn = 0, Scalar = 1 };

struct Checkpoint {
    std::uint64_t config_hash = 0;
    std::uint64_t step = 0;
    std::string agent;
    NetKind net_kind = NetKind::Iqn;
    NetConfig net_cfg;
    std::uint64_t head_offset = 0;  // output-layer slice boundaries
    std::uint64_t head_size = 0;
    std::vector<double> theta, target_theta;
    std::vector<std::pair<std::string, std::string>> rng_states;
    std::string config_json;
    // optimizer moment estimates (empty when the run used plain updates)
    std::uint64_t opt_t = 0;
    std::vector<double> opt_m, opt_v;
};

inline constexpr std::uint32_t kCheckpointMagic = 0x43515244;  // "DRQC"
inline constexpr std::uint32_t kCheckpointVersion = 1;

inline void save_checkpoint(const std::string& path, const Checkpoint& c) {
    std::string s;
    io::put_u32(s, kCheckpointMagic);
    io::put_u32(s, kCheckpointVersion);
    io::put_u64(s, c.config_hash);
    io::put_u64(s, c.step);
    io::put_str(s, c.agent);
    s.push_back(static_cast<char>(c.net_kind));
    io::put_u32(s, c.net_cfg.obs_dim);
    io::put_u32(s, c.net_cfg.hidden);
    io::put_u32(s, c.net_cfg.n_cos);
    io::put_u32(s, c.net_cfg.n_actions);
    io::put_u64(s, c.head_offset);
    io::put_u64(s, c.head_size);
    io::put_u64(s, c.theta.size());
    for (double d : c.theta) io::put_f64(s, d);
    io::put_u64(s, c.target_theta.size());
    for (double d : c.target_theta) io::put_f64(s, d);
    io::put_u32(s, static_cast<std::uint32_t>(c.rng_states.size()));
    for (const auto& [name, state] : c.rng_states) {
        io::put_str(s, name);
        io::put_str(s, state);
    }
    io::put_str(s, c.config_json);
    io::put_u64(s, c.opt_t);
    io::put_u64(s, c.opt_m.size());
    for (double d : c.opt_m) io::put_f64(s, d);
    io::put_u64(s, c.opt_v.size());
    for (double d : c.opt_v) io::put_f64(s, d);

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw ConfigError("cannot write checkpoint: " + path);
    f.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot read checkpoint: " + path);
    std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    io::Reader r(buf);
    if (r.u32() != kCheckpointMagic) throw ConfigError("not a checkpoint document: " + path);
    const auto version = r.u32();
    if (version != kCheckpointVersion)
        throw ConfigError("unsupported checkpoint version " + std::to_string(version));
    Checkpoint c;
    c.config_hash = r.u64();
    c.step = r.u64();
    c.agent = r.str();
    r.need(1);
    c.net_kind = static_cast<NetKind>(static_cast<unsigned char>(buf[r.pos]));
    r.pos += 1;
    c.net_cfg.obs_dim = static_cast<int>(r.u32());
    c.net_cfg.hidden = static_cast<int>(r.u32());
    c.net_cfg.n_cos = static_cast<int>(r.u32());
    c.net_cfg.n_actions = static_cast<int>(r.u32());
    c.head_offset = r.u64();
    c.head_size = r.u64();
    c.theta.resize(r.u64());
    for (double& d : c.theta) d = r.f64();
    c.target_theta.resize(r.u64());
    for (double& d : c.target_theta) d = r.f64();
    const auto n_rng = r.u32();
    for (std::uint32_t i = 0; i < n_rng; ++i) {
        auto name = r.str();
        auto state = r.str();
        c.rng_states.emplace_back(std::move(name), std::move(state));
    }
    c.config_json = r.str();
    c.opt_t = r.u64();
    c.opt_m.resize(r.u64());
    for (double& d : c.opt_m) d = r.f64();
    c.opt_v.resize(r.u64());
    for (double& d : c.opt_v) d = r.f64();
    return c;
}

// Refuses checkpoints whose schema does not match what the caller expects.
inline void ensure_compatible(const Checkpoint& c, const NetConfig& expected,
                              std::uint64_t expected_hash) {
    if (expected_hash != 0 && c.config_hash != expected_hash)
        throw ConfigError("checkpoint config hash mismatch: stored " +
                          std::to_string(c.config_hash) + ", expected " +
                          std::to_string(expected_hash));
    if (!(c.net_cfg == expected))
        throw ConfigError("checkpoint network schema mismatch (obs_dim " +
                          std::to_string(c.net_cfg.obs_dim) + " vs expected " +
                          std::to_string(expected.obs_dim) + ")");
}

}  // namespace driqn
