#pragma once

#include "loopshift/errors.hpp"
#include "loopshift/types.hpp"

#include <algorithm>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <variant>
#include <vector>

// Binary container:
//   "LLT1" | u32 record_count | records...
//   record: u16 name_len | name (UTF-8) | u8 dtype (1=f32, 2=f64) | u8 ndim |
//           ndim x u32 dims | payload, little-endian, row-major
namespace loopshift::io {

enum class DType : std::uint8_t { f32 = 1, f64 = 2 };

struct TensorRecord {
    std::string name;
    std::vector<std::uint32_t> dims;
    std::variant<std::vector<float>, std::vector<double>> values;

    DType dtype() const { return std::holds_alternative<std::vector<float>>(values) ? DType::f32 : DType::f64; }

    std::size_t element_count() const {
        return std::visit([](const auto& v) { return v.size(); }, values);
    }

    std::vector<double> as_doubles() const {
        return std::visit([](const auto& v) { return std::vector<double>(v.begin(), v.end()); }, values);
    }
};

inline std::size_t dims_product(const std::vector<std::uint32_t>& dims) {
    std::size_t n = 1;
    for (std::uint32_t d : dims) {
        n *= d;
    }
    return n;
}

inline TensorRecord matrix_record(std::string name, const Matrix& m, DType dtype = DType::f64) {
    TensorRecord r;
    r.name = std::move(name);
    r.dims = {static_cast<std::uint32_t>(m.rows()), static_cast<std::uint32_t>(m.cols())};
    if (dtype == DType::f64) {
        r.values = std::vector<double>(m.data(), m.data() + m.size());
    } else {
        std::vector<float> v(static_cast<std::size_t>(m.size()));
        for (long i = 0; i < m.size(); ++i) {
            v[static_cast<std::size_t>(i)] = static_cast<float>(m.data()[i]);
        }
        r.values = std::move(v);
    }
    return r;
}

inline Matrix record_matrix(const TensorRecord& r) {
    if (r.dims.size() != 2) {
        throw FormatError("record '" + r.name + "' is not two-dimensional");
    }
    const std::vector<double> v = r.as_doubles();
    Matrix m(static_cast<long>(r.dims[0]), static_cast<long>(r.dims[1]));
    std::copy(v.begin(), v.end(), m.data());
    return m;
}

class TensorDump {
public:
    void add(TensorRecord record) {
        if (record.name.size() > 0xFFFF) {
            throw FormatError("tensor name too long");
        }
        if (record.dims.size() > 0xFF) {
            throw FormatError("too many dimensions for '" + record.name + "'");
        }
        if (dims_product(record.dims) != record.element_count()) {
            throw FormatError("payload size does not match dims for '" + record.name + "'");
        }
        for (const TensorRecord& existing : records_) {
            if (existing.name == record.name) {
                throw FormatError("duplicate tensor name '" + record.name + "'");
            }
        }
        records_.push_back(std::move(record));
    }

    const std::vector<TensorRecord>& records() const { return records_; }

    const TensorRecord* find(const std::string& name) const {
        for (const TensorRecord& r : records_) {
            if (r.name == name) {
                return &r;
            }
        }
        return nullptr;
    }

    const TensorRecord& at(const std::string& name) const {
        const TensorRecord* r = find(name);
        if (r == nullptr) {
            throw FormatError("missing tensor '" + name + "'");
        }
        return *r;
    }

private:
    std::vector<TensorRecord> records_;
};

namespace dump_detail {

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
    std::uint8_t bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) {
        std::reverse(std::begin(bytes), std::end(bytes));
    }
    out.insert(out.end(), std::begin(bytes), std::end(bytes));
}

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> data) : data_(data) {}

    template <typename T>
    T get() {
        need(sizeof(T));
        std::uint8_t bytes[sizeof(T)];
        std::memcpy(bytes, data_.data() + pos_, sizeof(T));
        if constexpr (std::endian::native == std::endian::big) {
            std::reverse(std::begin(bytes), std::end(bytes));
        }
        pos_ += sizeof(T);
        T value;
        std::memcpy(&value, bytes, sizeof(T));
        return value;
    }

    std::string get_string(std::size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(data_.data() + pos_), n);
        pos_ += n;
        return s;
    }

    std::size_t remaining() const { return data_.size() - pos_; }

    void need(std::size_t n) const {
        if (n > remaining()) {
            throw FormatError("tensor dump truncated");
        }
    }

private:
    std::span<const std::uint8_t> data_;
    std::size_t pos_ = 0;
};

inline bool valid_utf8(const std::string& s) {
    std::size_t i = 0;
    while (i < s.size()) {
        const auto c = static_cast<unsigned char>(s[i]);
        std::size_t extra = 0;
        if (c < 0x80) {
            extra = 0;
        } else if ((c & 0xE0) == 0xC0 && c >= 0xC2) {
            extra = 1;
        } else if ((c & 0xF0) == 0xE0) {
            extra = 2;
        } else if ((c & 0xF8) == 0xF0 && c <= 0xF4) {
            extra = 3;
        } else {
            return false;
        }
        if (i + extra >= s.size()) {
            return false;
        }
        for (std::size_t k = 1; k <= extra; ++k) {
            if ((static_cast<unsigned char>(s[i + k]) & 0xC0) != 0x80) {
                return false;
            }
        }
        i += extra + 1;
    }
    return true;
}

} // namespace dump_detail

inline std::vector<std::uint8_t> serialize(const TensorDump& dump) {
    std::vector<std::uint8_t> out{'L', 'L', 'T', '1'};
    dump_detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(dump.records().size()));
    for (const TensorRecord& r : dump.records()) {
        dump_detail::put_le<std::uint16_t>(out, static_cast<std::uint16_t>(r.name.size()));
        out.insert(out.end(), r.name.begin(), r.name.end());
        out.push_back(static_cast<std::uint8_t>(r.dtype()));
        out.push_back(static_cast<std::uint8_t>(r.dims.size()));
        for (std::uint32_t d : r.dims) {
            dump_detail::put_le<std::uint32_t>(out, d);
        }
        std::visit(
            [&](const auto& values) {
                for (auto v : values) {
                    dump_detail::put_le(out, v);
                }
            },
            r.values);
    }
    return out;
}

inline TensorDump parse(std::span<const std::uint8_t> bytes) {
    dump_detail::Reader in(bytes);
    if (in.get_string(4) != "LLT1") {
        throw FormatError("bad tensor dump magic");
    }
    const std::uint32_t count = in.get<std::uint32_t>();
    TensorDump dump;
    std::unordered_set<std::string> seen;
    for (std::uint32_t k = 0; k < count; ++k) {
        TensorRecord r;
        const std::uint16_t name_len = in.get<std::uint16_t>();
        r.name = in.get_string(name_len);
        if (!dump_detail::valid_utf8(r.name)) {
            throw FormatError("tensor name is not valid UTF-8");
        }
        if (!seen.insert(r.name).second) {
            throw FormatError("duplicate tensor name '" + r.name + "'");
        }
        const std::uint8_t tag = in.get<std::uint8_t>();
        if (tag != static_cast<std::uint8_t>(DType::f32) && tag != static_cast<std::uint8_t>(DType::f64)) {
            throw FormatError("unknown dtype tag " + std::to_string(tag));
        }
        const std::uint8_t ndim = in.get<std::uint8_t>();
        const std::size_t width = tag == 1 ? 4 : 8;
        std::size_t elements = 1;
        for (std::uint8_t d = 0; d < ndim; ++d) {
            const std::uint32_t dim = in.get<std::uint32_t>();
            r.dims.push_back(dim);
            if (dim != 0 && elements > in.remaining() / width / dim) {
                throw FormatError("tensor payload larger than the file");
            }
            elements *= dim;
        }
        in.need(elements * width);
        if (tag == 1) {
            std::vector<float> v(elements);
            for (float& x : v) {
                x = in.get<float>();
            }
            r.values = std::move(v);
        } else {
            std::vector<double> v(elements);
            for (double& x : v) {
                x = in.get<double>();
            }
            r.values = std::move(v);
        }
        dump.add(std::move(r));
    }
    if (in.remaining() != 0) {
        throw FormatError("trailing bytes after the last tensor record");
    }
    return dump;
}

inline void write_dump(const std::filesystem::path& path, const TensorDump& dump) {
    const std::vector<std::uint8_t> bytes = serialize(dump);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw FormatError("cannot open " + path.string() + " for writing");
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw FormatError("write failed for " + path.string());
    }
}

inline std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw FormatError("cannot open " + path.string());
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline TensorDump read_dump(const std::filesystem::path& path) { return parse(read_bytes(path)); }

} // namespace loopshift::io
