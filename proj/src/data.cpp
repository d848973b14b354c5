#include "dsthcn/data.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <random>

namespace dsthcn {

namespace {

constexpr char kMagic[4] = {'S', 'K', 'L', '1'};

void put_u16(std::string& out, uint16_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& out, float v) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
}

struct Reader {
    const std::string& buf;
    std::size_t pos = 0;

    void need(std::size_t n, const char* what) const {
        if (pos + n > buf.size())
            throw format_error(std::string("SKL truncated reading ") + what + " at byte offset " +
                               std::to_string(pos));
    }
    uint8_t u8(const char* what) {
        need(1, what);
        return static_cast<uint8_t>(buf[pos++]);
    }
    uint16_t u16(const char* what) {
        need(2, what);
        uint16_t v = static_cast<uint8_t>(buf[pos]) |
                     (static_cast<uint16_t>(static_cast<uint8_t>(buf[pos + 1])) << 8);
        pos += 2;
        return v;
    }
    uint32_t u32(const char* what) {
        need(4, what);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<uint32_t>(static_cast<uint8_t>(buf[pos + i])) << (8 * i);
        pos += 4;
        return v;
    }
    float f32(const char* what) {
        const uint32_t bits = u32(what);
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
};

double next_unit(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * (1.0 / 9007199254740992.0);
}

double next_gauss(std::mt19937_64& rng) {
    // Box-Muller; draws are independent of the standard library
    double u1 = next_unit(rng);
    if (u1 < 1e-300) u1 = 1e-300;
    const double u2 = next_unit(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

} // namespace

void Dataset::validate() const {
    int V = -1;
    for (const auto& s : samples) {
        if (s.label < 0 || s.label >= class_count)
            throw input_error("dataset: label out of range");
        if (s.tensor.rank() != 3) throw input_error("dataset: sample must be C×T×V");
        if (s.tensor.dim(1) < 1) throw input_error("dataset: empty time axis");
        if (V < 0) V = s.tensor.dim(2);
        if (s.tensor.dim(2) != V) throw input_error("dataset: joint count must be uniform");
        if (!s.tensor.finite()) throw input_error("dataset: non-finite values");
    }
}

void write_skl(const std::string& path, const Dataset& d) {
    d.validate();
    std::string out;
    out.append(kMagic, 4);
    put_u16(out, 1);
    out.push_back(static_cast<char>(d.skeleton_id));
    out.push_back(0); // reserved
    put_u32(out, static_cast<uint32_t>(d.class_count));
    put_u32(out, static_cast<uint32_t>(d.samples.size()));
    for (const auto& s : d.samples) {
        put_u32(out, static_cast<uint32_t>(s.label));
        put_u32(out, static_cast<uint32_t>(s.tensor.dim(0)));
        put_u32(out, static_cast<uint32_t>(s.tensor.dim(1)));
        put_u32(out, static_cast<uint32_t>(s.tensor.dim(2)));
        for (double v : s.tensor.data) put_f32(out, static_cast<float>(v));
    }
    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw input_error("cannot write " + tmp);
        f.write(out.data(), static_cast<std::streamsize>(out.size()));
        if (!f) throw input_error("write failed: " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw input_error("rename failed: " + path);
}

Dataset read_skl(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw format_error("cannot open " + path);
    std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    Reader r{buf};
    r.need(4, "magic");
    if (std::memcmp(buf.data(), kMagic, 4) != 0)
        throw format_error("bad SKL magic at byte offset 0");
    r.pos = 4;
    const uint16_t version = r.u16("version");
    if (version != 1)
        throw format_error("unsupported SKL version " + std::to_string(version) +
                           " at byte offset 4");
    Dataset d;
    d.skeleton_id = r.u8("skeleton id");
    r.u8("reserved");
    d.class_count = static_cast<int>(r.u32("class count"));
    const uint32_t n = r.u32("sample count");
    d.samples.reserve(n);
    for (uint32_t i = 0; i < n; ++i) {
        SkeletonSample s;
        s.label = static_cast<int>(r.u32("label"));
        const int C = static_cast<int>(r.u32("C"));
        const int T = static_cast<int>(r.u32("T"));
        const int V = static_cast<int>(r.u32("V"));
        if (C < 1 || C > 16 || T < 1 || T > 1000000 || V < 1 || V > 1000)
            throw format_error("implausible sample header at byte offset " +
                               std::to_string(r.pos - 12));
        s.tensor = Tensor({C, T, V});
        for (auto& v : s.tensor.data) v = static_cast<double>(r.f32("sample values"));
        d.samples.push_back(std::move(s));
    }
    if (r.pos != buf.size())
        throw format_error("trailing bytes at offset " + std::to_string(r.pos));
    d.validate();
    return d;
}

SkeletonSample preprocess(const SkeletonSample& s, const SkeletonDefinition& sk) {
    const int C = s.tensor.dim(0), T = s.tensor.dim(1), V = s.tensor.dim(2);
    if (V != sk.joint_count) throw dim_error("preprocess: joint count mismatch");
    // mean bone length of frame 0 (coordinate channels only; extra channels pass through)
    const int coords = std::min(C, 3);
    double scale = 0.0;
    int bones = 0;
    for (int v = 0; v < V; ++v) {
        const int p = sk.parent[static_cast<std::size_t>(v)];
        if (p == v) continue;
        double d2 = 0.0;
        for (int c = 0; c < coords; ++c) {
            const double d = s.tensor.at3(c, 0, v) - s.tensor.at3(c, 0, p);
            d2 += d * d;
        }
        scale += std::sqrt(d2);
        ++bones;
    }
    scale = bones > 0 ? scale / bones : 1.0;
    if (scale < 1e-6) scale = 1e-6;
    SkeletonSample out;
    out.label = s.label;
    out.tensor = Tensor(s.tensor.shape);
    for (int c = 0; c < C; ++c)
        for (int t = 0; t < T; ++t) {
            const double center = s.tensor.at3(c, t, sk.center_joint);
            for (int v = 0; v < V; ++v)
                out.tensor.at3(c, t, v) = (s.tensor.at3(c, t, v) - center) / scale;
        }
    return out;
}

Dataset gen_synthetic(int classes, int per_class, int frames, const SkeletonDefinition& sk,
                      int skeleton_id, uint64_t seed, double noise_sigma) {
    if (classes < 2) throw input_error("gen_synthetic: need at least 2 classes");
    if (per_class < 1 || frames < 1) throw input_error("gen_synthetic: bad sizes");
    const int V = sk.joint_count;
    Dataset d;
    d.skeleton_id = skeleton_id;
    d.class_count = classes;
    for (int c = 0; c < classes; ++c) {
        // class motif: joint subset, per-joint motion direction, frequency, phase
        std::mt19937_64 crng(seed * 1000003ULL + static_cast<uint64_t>(c) * 97ULL + 13ULL);
        std::vector<int> moving;
        for (int v = 0; v < V; ++v)
            if (next_unit(crng) < 0.4) moving.push_back(v);
        while (static_cast<int>(moving.size()) < 3)
            moving.push_back(static_cast<int>(crng() % static_cast<uint64_t>(V)));
        std::vector<std::array<double, 3>> dir(static_cast<std::size_t>(V), {0.0, 0.0, 0.0});
        for (int v : moving)
            for (int p = 0; p < 3; ++p)
                dir[static_cast<std::size_t>(v)][static_cast<std::size_t>(p)] =
                    0.35 * (2.0 * next_unit(crng) - 1.0);
        const double freq = 1.0 + static_cast<double>(c);
        const double phase = 2.0 * M_PI * next_unit(crng);
        for (int i = 0; i < per_class; ++i) {
            std::mt19937_64 srng(seed * 7919ULL + static_cast<uint64_t>(c) * 65537ULL +
                                 static_cast<uint64_t>(i) * 131071ULL + 7ULL);
            const double sample_phase = 0.6 * (2.0 * next_unit(srng) - 1.0);
            const double sample_amp = 0.85 + 0.3 * next_unit(srng);
            SkeletonSample s;
            s.label = c;
            s.tensor = Tensor({3, frames, V});
            for (int t = 0; t < frames; ++t) {
                const double arg =
                    2.0 * M_PI * freq * static_cast<double>(t) / static_cast<double>(frames) +
                    phase + sample_phase;
                const double w = std::sin(arg);
                for (int v = 0; v < V; ++v)
                    for (int p = 0; p < 3; ++p)
                        s.tensor.at3(p, t, v) =
                            sk.rest_pose[static_cast<std::size_t>(v)][static_cast<std::size_t>(p)] +
                            sample_amp * dir[static_cast<std::size_t>(v)][static_cast<std::size_t>(p)] * w +
                            noise_sigma * next_gauss(srng);
            }
            d.samples.push_back(std::move(s));
        }
    }
    return d;
}

} // namespace dsthcn
