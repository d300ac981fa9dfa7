#pragma once

// IQ fixture files: `<name>.iq` holds interleaved little-endian float32 I/Q
// pairs; `<name>.iq.json` is the sidecar with sample_rate, start_time,
// label and sample count.

#include "dopptrack/signal_synth.hpp"

#include "json.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>

namespace dopptrack {

struct IqFile {
    IqBuffer buffer;
    std::string label;
};

namespace detail {

inline std::uint32_t to_little_endian(std::uint32_t v) {
    if constexpr (std::endian::native == std::endian::big)
        return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
    else
        return v;
}

}  // namespace detail

inline std::filesystem::path iq_sidecar_path(const std::filesystem::path& iq_path) {
    return std::filesystem::path(iq_path.string() + ".json");
}

inline void write_iq(const std::filesystem::path& path, const IqBuffer& buf, const std::string& label) {
    buf.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    std::vector<std::uint32_t> words;
    words.reserve(2 * buf.size());
    for (const auto& s : buf.samples) {
        words.push_back(detail::to_little_endian(std::bit_cast<std::uint32_t>(static_cast<float>(s.real()))));
        words.push_back(detail::to_little_endian(std::bit_cast<std::uint32_t>(static_cast<float>(s.imag()))));
    }
    out.write(reinterpret_cast<const char*>(words.data()),
              static_cast<std::streamsize>(words.size() * sizeof(std::uint32_t)));
    if (!out) throw std::runtime_error("write failed: " + path.string());

    nlohmann::ordered_json meta;
    meta["format"] = "cf32_le";
    meta["sample_rate"] = buf.sample_rate;
    meta["start_time"] = buf.start_time;
    meta["label"] = label;
    meta["num_samples"] = buf.size();
    std::ofstream side(iq_sidecar_path(path));
    if (!side) throw std::runtime_error("cannot open sidecar for " + path.string());
    side << meta.dump(2) << '\n';
}

inline IqFile read_iq(const std::filesystem::path& path) {
    std::ifstream side(iq_sidecar_path(path));
    if (!side) throw std::runtime_error("missing sidecar " + iq_sidecar_path(path).string());
    nlohmann::json meta;
    try {
        side >> meta;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("bad sidecar " + iq_sidecar_path(path).string() + ": " + e.what());
    }
    if (meta.value("format", std::string("cf32_le")) != "cf32_le")
        throw std::runtime_error("unsupported IQ format in " + path.string());

    IqFile f;
    f.label = meta.value("label", std::string());
    f.buffer.sample_rate = meta.at("sample_rate").get<double>();
    f.buffer.start_time = meta.value("start_time", 0.0);

    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    const auto bytes = static_cast<std::size_t>(in.tellg());
    if (bytes % 8 != 0) throw std::runtime_error("truncated IQ file " + path.string());
    in.seekg(0);
    std::vector<std::uint32_t> words(bytes / 4);
    in.read(reinterpret_cast<char*>(words.data()), static_cast<std::streamsize>(bytes));
    if (meta.contains("num_samples") && meta["num_samples"].get<std::size_t>() != bytes / 8)
        throw std::runtime_error("sample count mismatch in " + path.string());

    f.buffer.samples.resize(bytes / 8);
    for (std::size_t i = 0; i < f.buffer.samples.size(); ++i) {
        const float re = std::bit_cast<float>(detail::to_little_endian(words[2 * i]));
        const float im = std::bit_cast<float>(detail::to_little_endian(words[2 * i + 1]));
        f.buffer.samples[i] = Complex(re, im);
    }
    f.buffer.validate();
    return f;
}

}  // namespace dopptrack
