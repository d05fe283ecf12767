#pragma once

// EMB1 binary layout (all integers little-endian):
//   "EMB1" | version u8 = 1 | flags u8 (bit0: labels) | reserved u16 = 0 |
//   N u32 | d u32 | N*d float32 row-major | [N int32 labels]

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cgcd/dataset.hpp"
#include "cgcd/errors.hpp"

namespace cgcd {

static_assert(std::endian::native == std::endian::little, "EMB1 I/O assumes a little-endian host");

namespace emb1 {
inline constexpr std::array<char, 4> kMagic{'E', 'M', 'B', '1'};
inline constexpr std::uint8_t kVersion = 1;
inline constexpr std::uint8_t kFlagLabels = 0x1;
inline constexpr std::size_t kHeaderBytes = 16;
}  // namespace emb1

namespace detail {

template <typename T>
void put(std::vector<char>& buf, T v) {
    const auto* p = reinterpret_cast<const char*>(&v);
    buf.insert(buf.end(), p, p + sizeof(T));
}

template <typename T>
T get(const std::vector<char>& buf, std::size_t offset) {
    T v;
    std::memcpy(&v, buf.data() + offset, sizeof(T));
    return v;
}

inline std::vector<char> read_all(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace detail

inline std::vector<char> encode_emb1(const EmbeddingDataset& ds) {
    if (ds.size() > std::numeric_limits<std::uint32_t>::max() || ds.dim() > std::numeric_limits<std::uint32_t>::max()) {
        throw DataError("dataset too large for EMB1");
    }
    std::vector<char> buf(emb1::kMagic.begin(), emb1::kMagic.end());
    detail::put<std::uint8_t>(buf, emb1::kVersion);
    detail::put<std::uint8_t>(buf, ds.labels ? emb1::kFlagLabels : 0);
    detail::put<std::uint16_t>(buf, 0);
    detail::put<std::uint32_t>(buf, static_cast<std::uint32_t>(ds.size()));
    detail::put<std::uint32_t>(buf, static_cast<std::uint32_t>(ds.dim()));
    buf.reserve(buf.size() + ds.features.size() * 4 + (ds.labels ? ds.size() * 4 : 0));
    for (double v : ds.features.data()) detail::put<float>(buf, static_cast<float>(v));
    if (ds.labels) {
        for (int y : *ds.labels) detail::put<std::int32_t>(buf, y);
    }
    return buf;
}

inline EmbeddingDataset decode_emb1(const std::vector<char>& buf) {
    if (buf.size() < emb1::kHeaderBytes) throw DataError("EMB1: truncated header");
    if (!std::equal(emb1::kMagic.begin(), emb1::kMagic.end(), buf.begin())) throw DataError("EMB1: bad magic");
    const auto version = detail::get<std::uint8_t>(buf, 4);
    if (version != emb1::kVersion) throw DataError("EMB1: unsupported version " + std::to_string(version));
    const auto flags = detail::get<std::uint8_t>(buf, 5);
    const auto n = detail::get<std::uint32_t>(buf, 8);
    const auto d = detail::get<std::uint32_t>(buf, 12);

    const std::uint64_t cells = static_cast<std::uint64_t>(n) * d;
    if (cells > (std::numeric_limits<std::uint64_t>::max() - emb1::kHeaderBytes) / 8) {
        throw DataError("EMB1: N*d overflow");
    }
    const bool has_labels = (flags & emb1::kFlagLabels) != 0;
    const std::uint64_t expected = emb1::kHeaderBytes + cells * 4 + (has_labels ? std::uint64_t{n} * 4 : 0);
    if (buf.size() < expected) throw DataError("EMB1: truncated payload");
    if (buf.size() > expected) throw DataError("EMB1: trailing bytes after payload");

    EmbeddingDataset ds;
    std::vector<double> values(static_cast<std::size_t>(cells));
    std::size_t off = emb1::kHeaderBytes;
    for (auto& v : values) {
        v = static_cast<double>(detail::get<float>(buf, off));
        off += 4;
    }
    ds.features = Matrix(n, d, std::move(values));
    if (has_labels) {
        std::vector<int> labels(n);
        for (auto& y : labels) {
            y = detail::get<std::int32_t>(buf, off);
            off += 4;
        }
        ds.labels = std::move(labels);
    }
    ds.ids = EmbeddingDataset::sequential_ids(n);
    ds.validate();
    return ds;
}

inline void write_emb1(const EmbeddingDataset& ds, const std::filesystem::path& path) {
    const auto buf = encode_emb1(ds);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw DataError("short write to " + path.string());
}

inline EmbeddingDataset read_emb1(const std::filesystem::path& path) { return decode_emb1(detail::read_all(path)); }

// ---------------------------------------------------------------------------
// Manifest: step files, their roles, and the dense class map.

struct ManifestEntry {
    std::string path;  // relative to the manifest
    std::string role;  // "source", "train", "validation", ...
    int step = -1;
};

struct Manifest {
    std::vector<ManifestEntry> files;
    std::vector<int> dense_to_original;
};

inline nlohmann::json to_json(const Manifest& m) {
    nlohmann::json j;
    j["format"] = "EMB1";
    j["files"] = nlohmann::json::array();
    for (const auto& f : m.files) {
        nlohmann::json e{{"path", f.path}, {"role", f.role}};
        if (f.step >= 0) e["step"] = f.step;
        j["files"].push_back(e);
    }
    nlohmann::json cmap = nlohmann::json::object();
    for (std::size_t i = 0; i < m.dense_to_original.size(); ++i) {
        cmap[std::to_string(m.dense_to_original[i])] = i;
    }
    j["class_map"] = cmap;
    return j;
}

inline Manifest manifest_from_json(const nlohmann::json& j) {
    Manifest m;
    try {
        for (const auto& e : j.at("files")) {
            m.files.push_back({e.at("path").get<std::string>(), e.at("role").get<std::string>(), e.value("step", -1)});
        }
        const auto& cmap = j.at("class_map");
        m.dense_to_original.assign(cmap.size(), -1);
        for (const auto& [orig, dense] : cmap.items()) {
            const auto idx = dense.get<std::size_t>();
            if (idx >= m.dense_to_original.size()) throw DataError("manifest: class map is not dense");
            m.dense_to_original[idx] = std::stoi(orig);
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("manifest: ") + e.what());
    }
    return m;
}

inline void write_manifest(const Manifest& m, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << to_json(m).dump(2) << '\n';
}

inline Manifest read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    try {
        return manifest_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
        throw DataError(std::string("manifest: ") + e.what());
    }
}

}  // namespace cgcd
