#include "mach/persist.hpp"

#include <zlib.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <string>
#include <unistd.h>

namespace mach {
namespace {

constexpr std::size_t kHeaderBytes = 96;
constexpr std::size_t kSpecBytes = 48;
constexpr std::uint32_t kFlagIdentityHash = 1;

std::uint64_t checked_mul(std::uint64_t x, std::uint64_t y, const char* what) {
    std::uint64_t out = 0;
    if (__builtin_mul_overflow(x, y, &out)) {
        throw FormatError(std::string("model file ") + what + " size overflows");
    }
    return out;
}

std::uint64_t checked_add(std::uint64_t x, std::uint64_t y, const char* what) {
    std::uint64_t out = 0;
    if (__builtin_add_overflow(x, y, &out)) {
        throw FormatError(std::string("model file ") + what + " size overflows");
    }
    return out;
}

// Buffered little-endian writer with a running CRC32.
class Writer {
public:
    explicit Writer(std::ostream* out) : out_(out) {}

    void u32(std::uint32_t v) { put_le(v, 4); }
    void u64(std::uint64_t v) { put_le(v, 8); }
    void i64(std::int64_t v) { put_le(static_cast<std::uint64_t>(v), 8); }
    void f64(double v) { put_le(std::bit_cast<std::uint64_t>(v), 8); }
    void bytes(const void* data, std::size_t n) {
        const auto* p = static_cast<const std::uint8_t*>(data);
        buf_.insert(buf_.end(), p, p + n);
        maybe_flush();
    }

    std::uint64_t position() const { return written_ + buf_.size(); }

    // Appends the CRC of everything written so far and flushes.
    void finish() {
        flush();
        const std::uint32_t crc = crc_;
        put_le(crc, 4);
        flush();
    }

    std::vector<std::uint8_t> take() { return std::move(collected_); }

private:
    void put_le(std::uint64_t v, int n) {
        for (int i = 0; i < n; ++i) {
            buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
        }
        maybe_flush();
    }
    void maybe_flush() {
        if (buf_.size() >= (1u << 20)) {
            flush();
        }
    }
    void flush() {
        crc_ = static_cast<std::uint32_t>(::crc32(crc_, buf_.data(), static_cast<uInt>(buf_.size())));
        if (out_ != nullptr) {
            out_->write(reinterpret_cast<const char*>(buf_.data()), static_cast<std::streamsize>(buf_.size()));
        } else {
            collected_.insert(collected_.end(), buf_.begin(), buf_.end());
        }
        written_ += buf_.size();
        buf_.clear();
    }

    std::ostream* out_;
    std::vector<std::uint8_t> buf_;
    std::vector<std::uint8_t> collected_;
    std::uint64_t written_ = 0;
    std::uint32_t crc_ = 0;
};

void write_model(const MachModel& mm, Writer& w) {
    const MachConfig& cfg = mm.config();
    const std::uint64_t rep = mm.repetitions();
    const std::uint64_t buckets = mm.buckets();
    const std::uint64_t dim = mm.dim();
    if (rep != cfg.repetitions) {
        throw std::invalid_argument("cannot save a partially loaded model");
    }

    w.bytes(kModelMagic, sizeof(kModelMagic));
    w.u32(kModelFormatVersion);
    w.u32(cfg.identity_hash ? kFlagIdentityHash : 0);
    w.u64(cfg.classes);
    w.u64(buckets);
    w.u64(rep);
    w.u64(dim);
    w.u64(cfg.seed);
    w.u32(static_cast<std::uint32_t>(cfg.hash_kind));
    w.u32(static_cast<std::uint32_t>(cfg.train.optimizer));
    w.u32(cfg.train.epochs);
    w.u32(cfg.train.batch_size);
    w.f64(cfg.train.learning_rate);
    w.f64(cfg.train.lr_decay);
    w.u64(cfg.train.shuffle_seed);

    w.u64(mm.labels().size());
    for (std::int64_t label : mm.labels().originals()) {
        w.i64(label);
    }
    for (const HashSpec& s : mm.specs()) {
        w.u32(static_cast<std::uint32_t>(s.kind));
        w.u32(0);
        w.u64(s.a);
        w.u64(s.b);
        w.u64(s.p);
        w.u64(s.buckets);
        w.u64(s.universe);
    }
    const std::uint64_t block_bytes = (buckets * dim + buckets) * 8;
    const std::uint64_t first_block = w.position() + rep * 8;
    for (std::uint64_t r = 0; r < rep; ++r) {
        w.u64(first_block + r * block_bytes);
    }
    for (const SoftmaxModel& m : mm.models()) {
        for (std::size_t b = 0; b < buckets; ++b) {
            for (std::size_t j = 0; j < dim; ++j) {
                w.f64(m.weight(b, j));
            }
        }
        for (double v : m.bias()) {
            w.f64(v);
        }
    }
    w.finish();
}

// Bounds-checked little-endian reader over an in-memory section.
class Reader {
public:
    Reader(const std::uint8_t* data, std::size_t size) : data_(data), size_(size) {}

    std::uint32_t u32() { return static_cast<std::uint32_t>(get_le(4)); }
    std::uint64_t u64() { return get_le(8); }
    std::int64_t i64() { return static_cast<std::int64_t>(get_le(8)); }
    double f64() { return std::bit_cast<double>(get_le(8)); }

private:
    std::uint64_t get_le(int n) {
        if (pos_ + static_cast<std::size_t>(n) > size_) {
            throw FormatError("model section read past its end");
        }
        std::uint64_t v = 0;
        for (int i = 0; i < n; ++i) {
            v |= static_cast<std::uint64_t>(data_[pos_ + i]) << (8 * i);
        }
        pos_ += static_cast<std::size_t>(n);
        return v;
    }

    const std::uint8_t* data_;
    std::size_t size_;
    std::size_t pos_ = 0;
};

class ModelFile {
public:
    explicit ModelFile(const std::filesystem::path& path) : in_(path, std::ios::binary), path_(path.string()) {
        if (!in_) {
            throw std::runtime_error("cannot open model file " + path_);
        }
        in_.seekg(0, std::ios::end);
        size_ = static_cast<std::uint64_t>(in_.tellg());
        in_.seekg(0);
    }

    std::uint64_t size() const { return size_; }

    // Fails with the name of the section the file ends before.
    void require(std::uint64_t end, const std::string& section) const {
        if (end > size_) {
            throw FormatError("truncated model file " + path_ + ": missing " + section);
        }
    }

    std::vector<std::uint8_t> read(std::uint64_t offset, std::uint64_t n, const std::string& section) {
        require(checked_add(offset, n, section.c_str()), section);
        std::vector<std::uint8_t> buf(n);
        in_.seekg(static_cast<std::streamoff>(offset));
        in_.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n));
        if (!in_) {
            throw std::runtime_error("read error in " + path_ + " (" + section + ")");
        }
        return buf;
    }

    std::uint32_t crc_of_prefix(std::uint64_t n) {
        in_.seekg(0);
        std::vector<char> chunk(1u << 20);
        std::uint32_t crc = 0;
        while (n > 0) {
            const std::size_t take = static_cast<std::size_t>(std::min<std::uint64_t>(n, chunk.size()));
            in_.read(chunk.data(), static_cast<std::streamsize>(take));
            if (!in_) {
                throw std::runtime_error("read error in " + path_ + " while checksumming");
            }
            crc = static_cast<std::uint32_t>(::crc32(crc, reinterpret_cast<const Bytef*>(chunk.data()),
                                                     static_cast<uInt>(take)));
            n -= take;
        }
        return crc;
    }

    const std::string& path() const { return path_; }

private:
    std::ifstream in_;
    std::string path_;
    std::uint64_t size_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_model(const MachModel& mm) {
    Writer w(nullptr);
    write_model(mm, w);
    return w.take();
}

void save_model(const MachModel& mm, const std::filesystem::path& path) {
    std::filesystem::path tmp = path;
    tmp += ".tmp." + std::to_string(::getpid());
    try {
        {
            std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
            if (!out) {
                throw std::runtime_error("cannot write model file " + tmp.string());
            }
            Writer w(&out);
            write_model(mm, w);
            out.flush();
            if (!out) {
                throw std::runtime_error("write failed for " + tmp.string());
            }
        }
        std::filesystem::rename(tmp, path);
    } catch (...) {
        std::error_code ec;
        std::filesystem::remove(tmp, ec);
        throw;
    }
}

MachModel load_model(const std::filesystem::path& path, const std::optional<std::vector<std::size_t>>& subset) {
    ModelFile file(path);
    if (file.size() == 0) {
        throw FormatError("model file " + file.path() + " is empty");
    }

    const auto preamble = file.read(0, 16, "magic and version");
    if (std::memcmp(preamble.data(), kModelMagic, sizeof(kModelMagic)) != 0) {
        throw FormatError(file.path() + " is not a MACH model file (bad magic)");
    }
    Reader pre(preamble.data() + 8, 8);
    const std::uint32_t version = pre.u32();
    const std::uint32_t flags = pre.u32();
    if (version != kModelFormatVersion) {
        throw FormatError("unsupported model format version " + std::to_string(version) + " (this build reads " +
                          std::to_string(kModelFormatVersion) + ")");
    }

    const auto header_bytes = file.read(16, kHeaderBytes - 16, "header");
    Reader h(header_bytes.data(), header_bytes.size());
    MachConfig cfg;
    cfg.identity_hash = (flags & kFlagIdentityHash) != 0;
    cfg.classes = h.u64();
    cfg.buckets = h.u64();
    cfg.repetitions = h.u64();
    const std::uint64_t dim = h.u64();
    cfg.seed = h.u64();
    cfg.hash_kind = static_cast<HashKind>(h.u32());
    cfg.train.optimizer = static_cast<Optimizer>(h.u32());
    cfg.train.epochs = h.u32();
    cfg.train.batch_size = h.u32();
    cfg.train.learning_rate = h.f64();
    cfg.train.lr_decay = h.f64();
    cfg.train.shuffle_seed = h.u64();

    const auto count_bytes = file.read(kHeaderBytes, 8, "label map");
    const std::uint64_t label_count = Reader(count_bytes.data(), 8).u64();
    const std::uint64_t rep = cfg.repetitions;

    // Section boundaries, checked against the file size before any decoding.
    const std::uint64_t labels_at = kHeaderBytes + 8;
    const std::uint64_t specs_at = checked_add(labels_at, checked_mul(label_count, 8, "label map"), "label map");
    const std::uint64_t offsets_at = checked_add(specs_at, checked_mul(rep, kSpecBytes, "hash spec"), "hash spec");
    const std::uint64_t blocks_at = checked_add(offsets_at, checked_mul(rep, 8, "offset table"), "offset table");
    const std::uint64_t block_floats =
        checked_add(checked_mul(cfg.buckets, dim, "weight block"), cfg.buckets, "weight block");
    const std::uint64_t block_bytes = checked_mul(block_floats, 8, "weight block");
    const std::uint64_t crc_at = checked_add(blocks_at, checked_mul(rep, block_bytes, "weight block"), "weight block");

    file.require(specs_at, "label map");
    file.require(offsets_at, "hash spec records");
    file.require(blocks_at, "sub-model offset table");
    for (std::uint64_t r = 0; r < rep; ++r) {
        file.require(blocks_at + (r + 1) * block_bytes, "weight block of sub-model " + std::to_string(r));
    }
    file.require(crc_at + 4, "checksum trailer");
    if (file.size() != crc_at + 4) {
        throw FormatError("model file " + file.path() + " has " + std::to_string(file.size() - crc_at - 4) +
                          " trailing bytes");
    }

    const auto trailer = file.read(crc_at, 4, "checksum trailer");
    const std::uint32_t stored_crc = Reader(trailer.data(), 4).u32();
    if (file.crc_of_prefix(crc_at) != stored_crc) {
        throw FormatError("model file " + file.path() + " failed checksum validation");
    }

    cfg.validate();

    const auto label_bytes = file.read(labels_at, specs_at - labels_at, "label map");
    Reader lr(label_bytes.data(), label_bytes.size());
    std::vector<std::int64_t> originals(label_count);
    for (auto& label : originals) {
        label = lr.i64();
    }

    const auto spec_bytes = file.read(specs_at, offsets_at - specs_at, "hash spec records");
    Reader sr(spec_bytes.data(), spec_bytes.size());
    std::vector<HashSpec> specs(rep);
    for (auto& s : specs) {
        s.kind = static_cast<HashKind>(sr.u32());
        sr.u32();
        s.a = sr.u64();
        s.b = sr.u64();
        s.p = sr.u64();
        s.buckets = sr.u64();
        s.universe = sr.u64();
        s.validate();
    }
    const auto expected_specs = specs_for(cfg);
    if (specs != expected_specs) {
        throw FormatError("hash specs in " + file.path() + " do not match the stored seed and configuration");
    }

    const auto offset_bytes = file.read(offsets_at, blocks_at - offsets_at, "sub-model offset table");
    Reader orr(offset_bytes.data(), offset_bytes.size());
    std::vector<std::uint64_t> offsets(rep);
    for (std::uint64_t r = 0; r < rep; ++r) {
        offsets[r] = orr.u64();
        if (offsets[r] != blocks_at + r * block_bytes) {
            throw FormatError("sub-model offset table in " + file.path() + " is inconsistent");
        }
    }

    std::vector<std::size_t> chosen;
    if (subset) {
        chosen = *subset;
        if (chosen.empty()) {
            throw std::invalid_argument("sub-model subset is empty");
        }
        for (std::size_t r : chosen) {
            if (r >= rep) {
                throw std::out_of_range("sub-model " + std::to_string(r) + " not in a model with R=" +
                                        std::to_string(rep));
            }
        }
    } else {
        chosen.resize(rep);
        for (std::size_t r = 0; r < rep; ++r) {
            chosen[r] = r;
        }
    }

    std::vector<HashSpec> kept_specs;
    std::vector<SoftmaxModel> models;
    for (std::size_t r : chosen) {
        const auto block = file.read(offsets[r], block_bytes, "weight block of sub-model " + std::to_string(r));
        Reader br(block.data(), block.size());
        SoftmaxModel m(dim, cfg.buckets);
        for (std::size_t b = 0; b < cfg.buckets; ++b) {
            for (std::size_t j = 0; j < dim; ++j) {
                m.weight(b, j) = br.f64();
            }
        }
        for (double& v : m.bias()) {
            v = br.f64();
        }
        try {
            m.check_finite();
        } catch (const TrainingError&) {
            throw FormatError("sub-model " + std::to_string(r) + " in " + file.path() + " has non-finite weights");
        }
        kept_specs.push_back(specs[r]);
        models.push_back(std::move(m));
    }
    return MachModel(cfg, std::move(kept_specs), std::move(models), LabelMap(std::move(originals)), dim);
}

void write_predictions(std::ostream& out, std::span<const Prediction> preds) {
    const auto old = out.precision(17);
    for (const auto& p : preds) {
        out << p.label;
        for (const auto& t : p.top) {
            out << ' ' << t.label << ':' << t.score;
        }
        out << '\n';
    }
    out.precision(old);
}

}  // namespace mach
