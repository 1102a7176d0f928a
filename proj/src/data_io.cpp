#include "mach/data_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>
#include <string_view>

namespace mach {
namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; }

std::string_view next_token(std::string_view& rest) {
    std::size_t start = 0;
    while (start < rest.size() && is_space(rest[start])) {
        ++start;
    }
    std::size_t end = start;
    while (end < rest.size() && !is_space(rest[end])) {
        ++end;
    }
    std::string_view token = rest.substr(start, end - start);
    rest.remove_prefix(end);
    return token;
}

template <typename T>
bool parse_number(std::string_view text, T& out) {
    if (!text.empty() && text.front() == '+') {
        text.remove_prefix(1);
    }
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
    return ec == std::errc() && ptr == text.data() + text.size();
}

struct RawExample {
    std::int64_t label;
    SparseVector x;
};

}  // namespace

SparseVector SparseVector::from_pairs(std::vector<std::pair<std::uint32_t, double>> pairs) {
    std::stable_sort(pairs.begin(), pairs.end(),
                     [](const auto& l, const auto& r) { return l.first < r.first; });
    SparseVector v;
    v.indices.reserve(pairs.size());
    v.values.reserve(pairs.size());
    for (const auto& [index, value] : pairs) {
        if (!std::isfinite(value)) {
            throw std::invalid_argument("non-finite feature value at index " + std::to_string(index));
        }
        if (!v.indices.empty() && v.indices.back() == index) {
            v.values.back() += value;
        } else {
            v.indices.push_back(index);
            v.values.push_back(value);
        }
    }
    return v;
}

void SparseVector::validate(std::size_t dim) const {
    if (indices.size() != values.size()) {
        throw std::invalid_argument("sparse vector index/value length mismatch");
    }
    for (std::size_t k = 0; k < indices.size(); ++k) {
        if (k > 0 && indices[k] <= indices[k - 1]) {
            throw std::invalid_argument("sparse vector indices must be strictly increasing");
        }
        if (indices[k] >= dim) {
            throw std::invalid_argument("feature index " + std::to_string(indices[k]) +
                                        " out of range for dimension " + std::to_string(dim));
        }
        if (!std::isfinite(values[k])) {
            throw std::invalid_argument("non-finite feature value at index " + std::to_string(indices[k]));
        }
    }
}

LabelMap::LabelMap(std::vector<std::int64_t> originals) : originals_(std::move(originals)) {
    lookup_.reserve(originals_.size());
    for (std::size_t i = 0; i < originals_.size(); ++i) {
        if (!lookup_.emplace(originals_[i], static_cast<std::uint32_t>(i)).second) {
            throw std::invalid_argument("duplicate label " + std::to_string(originals_[i]) + " in label map");
        }
    }
}

LabelMap LabelMap::identity(std::size_t classes) {
    std::vector<std::int64_t> originals(classes);
    std::iota(originals.begin(), originals.end(), std::int64_t{0});
    return LabelMap(std::move(originals));
}

std::int64_t LabelMap::original(std::uint32_t internal) const {
    if (internal >= originals_.size()) {
        throw std::out_of_range("internal class id " + std::to_string(internal) + " has no original label");
    }
    return originals_[internal];
}

std::optional<std::uint32_t> LabelMap::find(std::int64_t original) const {
    const auto it = lookup_.find(original);
    if (it == lookup_.end()) {
        return std::nullopt;
    }
    return it->second;
}

void Dataset::validate() const {
    for (std::size_t n = 0; n < examples.size(); ++n) {
        if (examples[n].label >= classes) {
            throw std::invalid_argument("example " + std::to_string(n) + " label " +
                                        std::to_string(examples[n].label) + " >= K=" + std::to_string(classes));
        }
        examples[n].x.validate(dim);
    }
}

Dataset parse_libsvm(std::istream& in, const LoadOptions& options, const std::string& source) {
    std::vector<RawExample> raw;
    std::vector<std::size_t> line_of;
    std::uint64_t max_index_plus_one = 0;

    auto fail = [&](std::size_t line, const std::string& msg) -> ParseError {
        return ParseError(source + ":" + std::to_string(line) + ": " + msg, line);
    };

    std::string line;
    std::size_t line_no = 0;
    std::vector<std::pair<std::uint32_t, double>> pairs;
    while (std::getline(in, line)) {
        ++line_no;
        std::string_view rest(line);
        std::string_view label_tok = next_token(rest);
        if (label_tok.empty() || label_tok.front() == '#') {
            continue;
        }
        RawExample ex{};
        if (!parse_number(label_tok, ex.label)) {
            throw fail(line_no, "malformed label '" + std::string(label_tok) + "'");
        }
        pairs.clear();
        for (std::string_view tok = next_token(rest); !tok.empty(); tok = next_token(rest)) {
            const auto colon = tok.find(':');
            if (colon == std::string_view::npos) {
                throw fail(line_no, "expected idx:val, got '" + std::string(tok) + "'");
            }
            std::uint64_t index = 0;
            double value = 0.0;
            if (!parse_number(tok.substr(0, colon), index)) {
                throw fail(line_no, "malformed feature index in '" + std::string(tok) + "'");
            }
            if (!parse_number(tok.substr(colon + 1), value) || !std::isfinite(value)) {
                throw fail(line_no, "malformed feature value in '" + std::string(tok) + "'");
            }
            if (options.one_based) {
                if (index == 0) {
                    throw fail(line_no, "feature index 0 in one-based file");
                }
                --index;
            }
            if (index >= std::numeric_limits<std::uint32_t>::max()) {
                throw fail(line_no, "feature index too large");
            }
            if (options.expected_dim && index >= *options.expected_dim) {
                throw fail(line_no, "feature index " + std::to_string(index) + " exceeds expected d=" +
                                        std::to_string(*options.expected_dim));
            }
            max_index_plus_one = std::max(max_index_plus_one, index + 1);
            pairs.emplace_back(static_cast<std::uint32_t>(index), value);
        }
        try {
            ex.x = SparseVector::from_pairs(pairs);
        } catch (const std::invalid_argument& e) {
            throw fail(line_no, e.what());
        }
        raw.push_back(std::move(ex));
        line_of.push_back(line_no);
    }

    Dataset ds;
    ds.dim = options.expected_dim ? *options.expected_dim : static_cast<std::size_t>(max_index_plus_one);

    if (options.label_map != nullptr) {
        ds.labels = *options.label_map;
    } else if (options.expected_classes) {
        ds.labels = LabelMap::identity(*options.expected_classes);
    } else {
        std::set<std::int64_t> distinct;
        for (const auto& ex : raw) {
            distinct.insert(ex.label);
        }
        ds.labels = LabelMap(std::vector<std::int64_t>(distinct.begin(), distinct.end()));
    }
    ds.classes = ds.labels.size();

    ds.examples.reserve(raw.size());
    for (std::size_t n = 0; n < raw.size(); ++n) {
        const auto id = ds.labels.find(raw[n].label);
        if (!id) {
            if (options.label_map != nullptr && options.drop_unknown_labels) {
                ++ds.dropped_unknown;
                continue;
            }
            if (options.label_map != nullptr) {
                throw fail(line_of[n], "label " + std::to_string(raw[n].label) + " not in label map");
            }
            throw fail(line_of[n], "label " + std::to_string(raw[n].label) + " outside [0, " +
                                       std::to_string(ds.classes) + ")");
        }
        ds.examples.push_back(Example{std::move(raw[n].x), *id});
    }
    if (options.l2_normalize) {
        l2_normalize_rows(ds);
    }
    return ds;
}

Dataset load_libsvm(const std::filesystem::path& path, const LoadOptions& options) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open dataset " + path.string());
    }
    return parse_libsvm(in, options, path.string());
}

void write_libsvm(const Dataset& ds, std::ostream& out, bool one_based) {
    out << std::setprecision(17);
    const std::uint32_t offset = one_based ? 1 : 0;
    for (const auto& ex : ds.examples) {
        out << ds.labels.original(ex.label);
        for (std::size_t k = 0; k < ex.x.nnz(); ++k) {
            out << ' ' << (ex.x.indices[k] + offset) << ':' << ex.x.values[k];
        }
        out << '\n';
    }
}

void write_libsvm(const Dataset& ds, const std::filesystem::path& path, bool one_based) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot write dataset " + path.string());
    }
    write_libsvm(ds, out, one_based);
    if (!out) {
        throw std::runtime_error("write failed for " + path.string());
    }
}

void l2_normalize_rows(Dataset& ds) {
    for (auto& ex : ds.examples) {
        double sq = 0.0;
        for (double v : ex.x.values) {
            sq += v * v;
        }
        if (sq > 0.0) {
            const double inv = 1.0 / std::sqrt(sq);
            for (double& v : ex.x.values) {
                v *= inv;
            }
        }
    }
}

LabelAccessor dataset_labels(const Dataset& ds) {
    return [&ds](std::size_t n) { return ds.examples[n].label; };
}

LabelAccessor hashed_label_view(const Dataset& ds, const HashSpec& spec) {
    spec.validate();
    if (spec.universe < ds.classes) {
        throw std::invalid_argument("hash universe " + std::to_string(spec.universe) +
                                    " smaller than dataset class count " + std::to_string(ds.classes));
    }
    return [&ds, spec](std::size_t n) {
        return static_cast<std::uint32_t>(hash_class_unchecked(spec, ds.examples[n].label));
    };
}

std::pair<Dataset, Dataset> split_tail(const Dataset& ds, std::size_t holdout) {
    if (holdout > ds.size()) {
        throw std::invalid_argument("holdout larger than dataset");
    }
    Dataset head;
    Dataset tail;
    for (Dataset* part : {&head, &tail}) {
        part->dim = ds.dim;
        part->classes = ds.classes;
        part->labels = ds.labels;
    }
    const std::size_t cut = ds.size() - holdout;
    head.examples.assign(ds.examples.begin(), ds.examples.begin() + static_cast<std::ptrdiff_t>(cut));
    tail.examples.assign(ds.examples.begin() + static_cast<std::ptrdiff_t>(cut), ds.examples.end());
    return {std::move(head), std::move(tail)};
}

std::vector<std::size_t> shuffled_order(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::uint64_t state = seed;
    for (std::size_t i = n; i > 1; --i) {
        state += 0x9e3779b97f4a7c15ULL;
        const std::uint64_t j = splitmix64(state) % i;
        std::swap(order[i - 1], order[j]);
    }
    return order;
}

std::vector<std::span<const std::size_t>> make_batches(std::span<const std::size_t> order, std::size_t batch_size) {
    if (batch_size == 0) {
        throw std::invalid_argument("batch size must be positive");
    }
    std::vector<std::span<const std::size_t>> batches;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
        batches.push_back(order.subspan(start, std::min(batch_size, order.size() - start)));
    }
    return batches;
}

}  // namespace mach
