#pragma once
// Serializable model container.  Every trained model is persisted as a JSON
// document carrying a format tag, the model kind, the exact training
// configuration, the seed, a fingerprint of the training data, and the
// parameter payload.  Double arrays inside payloads are hex strings holding
// the raw IEEE-754 bits (little-endian), so save -> load -> save reproduces
// the file bytes exactly.

#include <json.hpp>

#include <cstdint>
#include <cstring>
#include <memory>
#include <string>
#include <vector>

#include "aoalab/errors.hpp"

namespace aoalab {

inline constexpr char kModelFormatTag[] = "AOALB-MODEL-v1";

// Minimal interface every trained classifier implements.  predict_proba
// returns one probability per entry of class_space(), in order.
struct Model {
    virtual ~Model() = default;
    virtual std::string kind_name() const = 0;
    virtual std::size_t feature_dim() const = 0;
    virtual const std::vector<int>& class_space() const = 0;
    virtual std::vector<double> predict_proba(const double* x, std::size_t dim) const = 0;
    virtual nlohmann::ordered_json payload() const = 0;
};

namespace detail {

inline std::string hex_from_doubles(const std::vector<double>& values) {
    static const char digits[] = "0123456789abcdef";
    std::string out;
    out.reserve(values.size() * 16);
    for (double v : values) {
        std::uint64_t bits = 0;
        std::memcpy(&bits, &v, sizeof bits);
        for (int byte = 0; byte < 8; ++byte) {
            const unsigned b = static_cast<unsigned>((bits >> (8 * byte)) & 0xffu);
            out.push_back(digits[b >> 4]);
            out.push_back(digits[b & 0xfu]);
        }
    }
    return out;
}

inline std::vector<double> doubles_from_hex(const std::string& hex) {
    if (hex.size() % 16 != 0) throw FormatError("double array has truncated hex length");
    auto nibble = [](char c) -> std::uint64_t {
        if (c >= '0' && c <= '9') return static_cast<std::uint64_t>(c - '0');
        if (c >= 'a' && c <= 'f') return static_cast<std::uint64_t>(10 + c - 'a');
        throw FormatError("invalid hex digit in double array");
    };
    std::vector<double> out(hex.size() / 16);
    for (std::size_t i = 0; i < out.size(); ++i) {
        std::uint64_t bits = 0;
        for (int byte = 0; byte < 8; ++byte) {
            const std::uint64_t hi = nibble(hex[i * 16 + 2 * byte]);
            const std::uint64_t lo = nibble(hex[i * 16 + 2 * byte + 1]);
            bits |= ((hi << 4) | lo) << (8 * byte);
        }
        std::memcpy(&out[i], &bits, sizeof bits);
    }
    return out;
}

}  // namespace detail

struct ModelArtifact {
    std::string kind;
    nlohmann::ordered_json config;
    std::uint64_t seed = 0;
    std::string data_fingerprint;
    std::shared_ptr<const Model> runtime;

    std::string to_bytes() const;
};

inline nlohmann::ordered_json artifact_doc(const ModelArtifact& artifact) {
    nlohmann::ordered_json doc;
    doc["format"] = kModelFormatTag;
    doc["kind"] = artifact.kind;
    doc["seed"] = artifact.seed;
    doc["data_fingerprint"] = artifact.data_fingerprint;
    doc["config"] = artifact.config;
    doc["payload"] = artifact.runtime ? artifact.runtime->payload()
                                      : nlohmann::ordered_json::object();
    return doc;
}

inline std::string ModelArtifact::to_bytes() const { return artifact_doc(*this).dump(2) + "\n"; }

namespace detail {

// Shared validation for top-level documents and nested artifact objects.
inline void check_artifact_doc(const nlohmann::ordered_json& doc) {
    if (!doc.is_object()) throw FormatError("model container must be a JSON object");
    if (!doc.contains("format") || !doc["format"].is_string() ||
        doc["format"].get<std::string>() != kModelFormatTag)
        throw FormatError("model container has a missing or unsupported format tag");
    for (const char* key : {"kind", "data_fingerprint"})
        if (!doc.contains(key) || !doc[key].is_string())
            throw FormatError(std::string("model container lacks string field: ") + key);
    if (!doc.contains("seed") || !doc["seed"].is_number_unsigned())
        throw FormatError("model container lacks an unsigned seed");
    if (!doc.contains("config") || !doc["config"].is_object())
        throw FormatError("model container lacks a config object");
    if (!doc.contains("payload") || !doc["payload"].is_object())
        throw FormatError("model container lacks a payload object");
}

inline nlohmann::ordered_json parse_artifact_bytes(const std::string& bytes) {
    nlohmann::ordered_json doc;
    try {
        doc = nlohmann::ordered_json::parse(bytes);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("model container is not valid JSON: ") + e.what());
    }
    return doc;
}

}  // namespace detail

}  // namespace aoalab
