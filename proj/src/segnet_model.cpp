#include <array>
#include <bit>
#include <cstring>
#include <fstream>

#include "boltpipe/segnet.hpp"

namespace boltpipe::segnet {

static_assert(std::endian::native == std::endian::little, "model files are written in host byte order");

namespace {

constexpr std::array<char, 6> kMagic{'B', 'P', 'S', 'E', 'G', '1'};
constexpr std::uint64_t kMaxWidth = 1u << 20;

class Writer {
public:
    explicit Writer(const std::string& path) : path_(path), out_(path, std::ios::binary) {
        if (!out_) throw IoError("cannot open " + path + " for writing");
    }
    void bytes(const void* p, std::size_t n) { out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }
    void u64(std::uint64_t v) { bytes(&v, sizeof v); }
    void f64(double v) { bytes(&v, sizeof v); }
    void widths(const std::vector<std::size_t>& w) {
        u64(w.size());
        for (std::size_t v : w) u64(v);
    }
    void tensors(const std::vector<Mat>& ts) {
        u64(ts.size());
        for (const Mat& t : ts) {
            u64(static_cast<std::uint64_t>(t.rows()));
            u64(static_cast<std::uint64_t>(t.cols()));
            bytes(t.data(), sizeof(double) * static_cast<std::size_t>(t.size()));
        }
    }
    void finish() {
        out_.flush();
        if (!out_) throw IoError("write failed: " + path_);
    }

private:
    std::string path_;
    std::ofstream out_;
};

class Reader {
public:
    explicit Reader(const std::string& path) : path_(path), in_(path, std::ios::binary) {
        if (!in_) throw IoError("cannot open " + path);
    }
    void bytes(void* p, std::size_t n) {
        in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in_.gcount()) != n) throw FormatError(path_ + ": truncated model file");
    }
    std::uint64_t u64() {
        std::uint64_t v;
        bytes(&v, sizeof v);
        return v;
    }
    double f64() {
        double v;
        bytes(&v, sizeof v);
        return v;
    }
    std::size_t width() {
        const std::uint64_t v = u64();
        if (v > kMaxWidth) throw FormatError(path_ + ": implausible layer width");
        return static_cast<std::size_t>(v);
    }
    std::vector<std::size_t> widths() {
        const std::size_t n = width();
        std::vector<std::size_t> w(n);
        for (auto& v : w) v = width();
        return w;
    }
    void tensors(std::vector<Mat>& expected, const char* what) {
        if (u64() != expected.size()) throw FormatError(path_ + ": " + what + " count does not match the architecture");
        for (Mat& t : expected) {
            const std::uint64_t r = u64(), c = u64();
            if (r != static_cast<std::uint64_t>(t.rows()) || c != static_cast<std::uint64_t>(t.cols())) {
                throw FormatError(path_ + ": " + what + " shape does not match the architecture");
            }
            bytes(t.data(), sizeof(double) * static_cast<std::size_t>(t.size()));
        }
    }
    const std::string& path() const { return path_; }

private:
    std::string path_;
    std::ifstream in_;
};

} // namespace

void save_model(const SegModel& model, const std::string& path) {
    const ArchConfig& a = model.arch();
    Writer w(path);
    w.bytes(kMagic.data(), kMagic.size());
    w.u64(a.k);
    w.widths(a.tnet_edge);
    w.u64(a.tnet_point);
    w.widths(a.tnet_fc);
    w.widths(a.edge_widths);
    w.u64(a.agg);
    w.widths(a.head);
    w.f64(a.leaky_slope);
    w.f64(a.bn_momentum);
    w.f64(a.bn_eps);
    w.u64(a.standardize_lambda ? 1 : 0);
    w.tensors(model.params());
    w.tensors(model.buffers());
    w.finish();
}

SegModel load_model(const std::string& path) {
    Reader r(path);
    std::array<char, 6> magic{};
    r.bytes(magic.data(), magic.size());
    if (magic != kMagic) throw FormatError(path + ": not a segmentation model (bad magic)");
    SegModel m;
    ArchConfig& a = m.arch_;
    a.k = r.width();
    a.tnet_edge = r.widths();
    a.tnet_point = r.width();
    a.tnet_fc = r.widths();
    a.edge_widths = r.widths();
    a.agg = r.width();
    a.head = r.widths();
    a.leaky_slope = r.f64();
    a.bn_momentum = r.f64();
    a.bn_eps = r.f64();
    a.standardize_lambda = r.u64() != 0;
    try {
        a.validate();
    } catch (const ConfigError& e) {
        throw FormatError(path + ": bad architecture header: " + e.what());
    }
    m.build(0, false);
    r.tensors(m.params_, "parameter");
    r.tensors(m.buffers_, "buffer");
    for (const Mat& t : m.params_) {
        if (!t.allFinite()) throw FormatError(path + ": non-finite parameter");
    }
    return m;
}

} // namespace boltpipe::segnet
