#pragma once

// Synthetic massive-MIMO OFDM channel generator. Plants known per-track
// angular signatures (dominant path + diffuse multipath, Rician power split)
// so that downstream angle estimates always have ground truth to compare
// against. Pure function of (geometry, track spec, seed).

#include <aoalab/errors.hpp>
#include <aoalab/linalg.hpp>
#include <aoalab/rng.hpp>

#include <json.hpp>

#include <cmath>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

namespace aoalab {

enum class Region { LoS, NLoS };

inline std::string region_name(Region r) { return r == Region::LoS ? "LoS" : "NLoS"; }

inline Region region_from_name(const std::string& s) {
    if (s == "LoS") return Region::LoS;
    if (s == "NLoS") return Region::NLoS;
    throw FormatError("unknown region name: " + s);
}

struct ArrayGeometry {
    std::size_t rows = 4;
    std::size_t cols = 16;
    double horizontal_spacing = 0.5;  // wavelengths
    double vertical_spacing = 1.0;    // wavelengths
    double carrier_hz = 2.18e9;
    std::size_t subcarriers = 50;
    double bandwidth_hz = 10e6;

    std::size_t antennas() const { return rows * cols; }
    double subcarrier_hz(std::size_t m) const {
        return carrier_hz +
               (static_cast<double>(m) - static_cast<double>(subcarriers) / 2.0) * bandwidth_hz /
                   static_cast<double>(subcarriers);
    }
};

struct TrackSpec {
    int track_id = 0;
    Region region = Region::LoS;
    std::size_t snapshots = 24000;
    double base_azimuth = 0.0;   // degrees
    double azimuth_drift = 0.0;  // degrees over the full track
    double rician_k_db = 15.0;   // dominant/diffuse power ratio
    std::size_t multipath_count = 0;
    double snr_db = std::numeric_limits<double>::infinity();
};

struct CsiTensor {
    ArrayGeometry geometry;
    TrackSpec track;
    std::vector<cplx> data;  // (antenna, subcarrier, snapshot) row-major

    cplx& at(std::size_t n, std::size_t m, std::size_t t) {
        return data[(n * geometry.subcarriers + m) * track.snapshots + t];
    }
    const cplx& at(std::size_t n, std::size_t m, std::size_t t) const {
        return data[(n * geometry.subcarriers + m) * track.snapshots + t];
    }
};

namespace detail {

constexpr double kDegToRad = 3.14159265358979323846 / 180.0;
constexpr double kTwoPi = 2.0 * 3.14159265358979323846;

// free parameters of the generator, fixed by design
constexpr double kMaxDelaySeconds = 1e-6;
constexpr double kDelayDecaySeconds = 0.3e-6;
constexpr double kDominantPhaseStd = 0.01;  // rad per snapshot
constexpr double kDiffusePhaseStd = 0.02;   // rad per snapshot
constexpr double kDiffuseDopplerMax = 0.3;  // rad per snapshot, uniform per path
constexpr double kDiffuseAzimuthLimit = 80.0;

inline void validate_geometry(const ArrayGeometry& g) {
    if (g.rows == 0 || g.cols == 0) throw InvalidSpec("array needs at least one antenna");
    if (g.rows * g.cols > 64) throw InvalidSpec("array exceeds the 64-antenna budget");
    if (!(g.horizontal_spacing > 0.0) || !(g.vertical_spacing > 0.0))
        throw InvalidSpec("antenna spacing must be positive");
    if (g.subcarriers == 0) throw InvalidSpec("need at least one subcarrier");
    if (!(g.carrier_hz > 0.0) || !(g.bandwidth_hz > 0.0))
        throw InvalidSpec("carrier and bandwidth must be positive");
}

inline void validate_track(const TrackSpec& s) {
    if (!(std::abs(s.base_azimuth) < 90.0))
        throw InvalidSpec("base azimuth must lie strictly inside (-90, 90) degrees");
    const double endpoint = s.base_azimuth + s.azimuth_drift;
    if (!(std::abs(endpoint) <= 90.0))
        throw InvalidSpec("azimuth drift would push the track beyond endfire");
    if (s.snapshots == 0) throw InvalidSpec("track needs at least one snapshot");
    if (s.region == Region::LoS) {
        if (!(s.rician_k_db >= 10.0))
            throw InvalidSpec("LoS track needs a dominant path of at least 10 dB");
    } else {
        if (!(s.rician_k_db <= 0.0))
            throw InvalidSpec("NLoS track cannot have a dominant path above 0 dB");
        if (s.multipath_count < 1)
            throw InvalidSpec("NLoS track needs at least one diffuse path");
    }
}

}  // namespace detail

// Far-field response of one horizontal antenna row to a plane wave from the
// given azimuth: element n = exp(-j * 2*pi * spacing * n * sin(azimuth)).
// The response carries no elevation term, so every row sees the same vector.
inline std::vector<cplx> steering_vector(const ArrayGeometry& geometry, double azimuth_deg,
                                         std::size_t row = 0) {
    detail::validate_geometry(geometry);
    if (!(std::abs(azimuth_deg) <= 90.0))
        throw AzimuthOutOfRange("azimuth outside [-90, 90] degrees");
    if (row >= geometry.rows) throw InvalidArgument("row index outside the array");
    const double s = std::sin(azimuth_deg * detail::kDegToRad);
    std::vector<cplx> a(geometry.cols);
    for (std::size_t n = 0; n < geometry.cols; ++n) {
        const double phase = -detail::kTwoPi * geometry.horizontal_spacing *
                             static_cast<double>(n) * s;
        a[n] = cplx(std::cos(phase), std::sin(phase));
    }
    return a;
}

// H(n,m,t) = sum_l g_l(t) * a_n(theta_l(t)) * exp(-j*2*pi*f_m*tau_l) + noise.
// Path 0 is the dominant path at the (linearly drifting) track azimuth with
// unit-modulus gain; paths 1..L are diffuse with seeded random angles, delays
// drawn from an exponential power profile, and slow phase drift. The diffuse
// gains are normalized so that diffuse power is exactly 10^(-K/10) times the
// dominant power. Complex white Gaussian noise at snr_db relative to total
// signal power. All randomness flows through per-track derived substreams, so
// the dominant component does not depend on the diffuse/noise configuration.
inline CsiTensor generate_track(const ArrayGeometry& geometry, const TrackSpec& track,
                                std::uint64_t seed) {
    detail::validate_geometry(geometry);
    detail::validate_track(track);

    const std::size_t n_count = geometry.antennas();
    const std::size_t m_count = geometry.subcarriers;
    const std::size_t t_count = track.snapshots;
    const std::size_t l_count = track.multipath_count;  // diffuse paths
    const std::string label = "track/" + std::to_string(track.track_id) + "/";

    // static path geometry: delays, diffuse angles, diffuse gains
    Rng rng_paths(seed_for(seed, label + "paths"));
    const double tau0 = rng_paths.uniform() * detail::kMaxDelaySeconds;
    std::vector<double> tau(l_count), az(l_count), doppler(l_count);
    std::vector<cplx> g0_draw(l_count);
    for (std::size_t l = 0; l < l_count; ++l) {
        az[l] = rng_paths.uniform(-detail::kDiffuseAzimuthLimit, detail::kDiffuseAzimuthLimit);
        tau[l] = rng_paths.uniform() * detail::kMaxDelaySeconds;
        const double profile = std::exp(-tau[l] / detail::kDelayDecaySeconds);
        const double component_std = std::sqrt(profile / 2.0);
        g0_draw[l] = cplx(rng_paths.normal(0.0, component_std),
                          rng_paths.normal(0.0, component_std));
        // per-path linear phase rotation emulating scatterer Doppler: keeps
        // diffuse paths incoherent with the dominant path within a window
        doppler[l] =
            rng_paths.uniform(-detail::kDiffuseDopplerMax, detail::kDiffuseDopplerMax);
    }
    // scale diffuse magnitudes so their total power hits the Rician split
    // exactly (the dominant path has unit power)
    const double diffuse_target = std::pow(10.0, -track.rician_k_db / 10.0);
    double draw_power = 0.0;
    for (const auto& z : g0_draw) draw_power += std::norm(z);
    double scale = 0.0;
    if (l_count > 0 && diffuse_target > 0.0) {
        if (draw_power <= 0.0) throw NumericError("degenerate diffuse gain draw");
        scale = std::sqrt(diffuse_target / draw_power);
    }
    for (auto& z : g0_draw) z *= scale;

    // temporal gain evolution: phase-only random walks keep per-path power
    // constant over the track, preserving the power split at every snapshot
    Rng rng_dom(seed_for(seed, label + "dominant-phase"));
    std::vector<cplx> gain0(t_count);
    {
        double phase = rng_dom.uniform() * detail::kTwoPi;
        for (std::size_t t = 0; t < t_count; ++t) {
            if (t > 0) phase += rng_dom.normal(0.0, detail::kDominantPhaseStd);
            gain0[t] = cplx(std::cos(phase), std::sin(phase));
        }
    }
    Rng rng_dif(seed_for(seed, label + "diffuse-phase"));
    std::vector<std::vector<cplx>> gain(l_count);
    for (std::size_t l = 0; l < l_count; ++l) {
        gain[l].resize(t_count);
        const double mag = std::abs(g0_draw[l]);
        double phase = std::arg(g0_draw[l]);
        for (std::size_t t = 0; t < t_count; ++t) {
            if (t > 0) phase += doppler[l] + rng_dif.normal(0.0, detail::kDiffusePhaseStd);
            gain[l][t] = cplx(mag * std::cos(phase), mag * std::sin(phase));
        }
    }

    // dominant-path steering per (column, snapshot): the azimuth drifts
    // linearly from base to base + drift across the track
    std::vector<cplx> steer0(geometry.cols * t_count);
    {
        const double denom = t_count > 1 ? static_cast<double>(t_count - 1) : 1.0;
        for (std::size_t t = 0; t < t_count; ++t) {
            const double theta =
                track.base_azimuth + track.azimuth_drift * static_cast<double>(t) / denom;
            const double s = std::sin(theta * detail::kDegToRad);
            for (std::size_t c = 0; c < geometry.cols; ++c) {
                const double phase =
                    -detail::kTwoPi * geometry.horizontal_spacing * static_cast<double>(c) * s;
                steer0[c * t_count + t] = cplx(std::cos(phase), std::sin(phase));
            }
        }
    }
    // diffuse steering is static per path
    std::vector<std::vector<cplx>> steer(l_count);
    for (std::size_t l = 0; l < l_count; ++l) steer[l] = steering_vector(geometry, az[l], 0);

    // frequency factors exp(-j*2*pi*f_m*tau_l); only the sub-band offset
    // matters jointly with the carrier, computed at full precision
    auto freq_factor = [&](std::size_t m, double tau_s) {
        const double phase = -detail::kTwoPi * geometry.subcarrier_hz(m) * tau_s;
        return cplx(std::cos(phase), std::sin(phase));
    };
    std::vector<cplx> freq0(m_count);
    for (std::size_t m = 0; m < m_count; ++m) freq0[m] = freq_factor(m, tau0);
    std::vector<std::vector<cplx>> freq(l_count);
    for (std::size_t l = 0; l < l_count; ++l) {
        freq[l].resize(m_count);
        for (std::size_t m = 0; m < m_count; ++m) freq[l][m] = freq_factor(m, tau[l]);
    }

    const double signal_power = 1.0 + (l_count > 0 ? diffuse_target : 0.0);
    const double noise_power = signal_power * std::pow(10.0, -track.snr_db / 10.0);
    const double noise_component_std = std::sqrt(noise_power / 2.0);
    Rng rng_noise(seed_for(seed, label + "noise"));

    CsiTensor out;
    out.geometry = geometry;
    out.track = track;
    out.data.resize(n_count * m_count * t_count);

    std::vector<cplx> coeff(l_count);
    for (std::size_t n = 0; n < n_count; ++n) {
        const std::size_t c = n % geometry.cols;
        for (std::size_t m = 0; m < m_count; ++m) {
            for (std::size_t l = 0; l < l_count; ++l) coeff[l] = steer[l][c] * freq[l][m];
            cplx* slot = &out.data[(n * m_count + m) * t_count];
            const cplx* a0 = &steer0[c * t_count];
            for (std::size_t t = 0; t < t_count; ++t) {
                cplx h = gain0[t] * a0[t] * freq0[m];
                for (std::size_t l = 0; l < l_count; ++l) h += coeff[l] * gain[l][t];
                if (noise_component_std > 0.0) {
                    h += cplx(rng_noise.normal(0.0, noise_component_std),
                              rng_noise.normal(0.0, noise_component_std));
                }
                slot[t] = h;
            }
        }
    }
    return out;
}

struct CampaignPlan {
    ArrayGeometry geometry;
    std::vector<TrackSpec> tracks;
};

// Ten-track measurement campaign: five LoS tracks with a strong dominant path
// and five NLoS tracks dominated by diffuse multipath, base azimuths at least
// 8 degrees apart within each region.
inline CampaignPlan default_campaign_plan(std::size_t snapshots = 24000) {
    CampaignPlan plan;
    struct Entry {
        int id;
        Region region;
        double azimuth;
    };
    const Entry entries[] = {
        {6, Region::LoS, -55.0},  {9, Region::LoS, -20.0},  {10, Region::LoS, 10.0},
        {11, Region::LoS, -35.0}, {12, Region::LoS, 30.0},  {1, Region::NLoS, -45.0},
        {2, Region::NLoS, -10.0}, {3, Region::NLoS, 25.0},  {13, Region::NLoS, 50.0},
        {20, Region::NLoS, 5.0},
    };
    for (const auto& e : entries) {
        TrackSpec s;
        s.track_id = e.id;
        s.region = e.region;
        s.snapshots = snapshots;
        s.base_azimuth = e.azimuth;
        s.azimuth_drift = 2.0;
        if (e.region == Region::LoS) {
            s.rician_k_db = 15.0;
            s.multipath_count = 3;
        } else {
            // Dense scattering: with only a handful of diffuse paths one of them
            // tends to dominate the window covariance and the track collapses to
            // a tight cluster at a random angle, indistinguishable from a LoS
            // track that happens to sit nearby. Sixteen comparable-power paths
            // keep the dominant eigenvector unstable across subcarriers, which
            // is what gives NLoS windows their characteristic spread.
            s.rician_k_db = -5.0;
            s.multipath_count = 16;
        }
        s.snr_db = 10.0;
        plan.tracks.push_back(s);
    }
    return plan;
}

// Materializes the whole campaign. Note the memory cost: at the full 24000
// snapshots each tensor holds 64*50*24000 complex doubles (about 1.2 GB), so
// prefer iterating default_campaign_plan() and generating/dropping tracks one
// at a time unless snapshots is small.
inline std::vector<CsiTensor> default_campaign(std::uint64_t seed,
                                               std::size_t snapshots = 24000) {
    auto plan = default_campaign_plan(snapshots);
    std::vector<CsiTensor> out;
    out.reserve(plan.tracks.size());
    for (const auto& s : plan.tracks) out.push_back(generate_track(plan.geometry, s, seed));
    return out;
}

// ---------------------------------------------------------------------------
// binary tensor file + JSON sidecar

namespace detail {
inline constexpr char kCsiMagic[16] = {'A', 'O', 'A', 'L', 'B', '-', 'C', 'S',
                                       'I', '-', 'v', '1', '\0', '\0', '\0', '\0'};
}

// Layout: 16-byte magic, three little-endian u32 dims (antennas, subcarriers,
// snapshots), then interleaved float64 (re, im) pairs in (n, m, t) row-major
// order. Geometry, track spec, and seed go to "<path>.json".
inline void write_csi(const std::string& path, const CsiTensor& h, std::uint64_t seed) {
    const std::size_t n_count = h.geometry.antennas();
    const std::size_t m_count = h.geometry.subcarriers;
    const std::size_t t_count = h.track.snapshots;
    if (h.data.size() != n_count * m_count * t_count)
        throw InvalidArgument("tensor dimensions disagree with its payload");

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open for writing: " + path);
    f.write(detail::kCsiMagic, sizeof(detail::kCsiMagic));
    const std::uint32_t dims[3] = {static_cast<std::uint32_t>(n_count),
                                   static_cast<std::uint32_t>(m_count),
                                   static_cast<std::uint32_t>(t_count)};
    f.write(reinterpret_cast<const char*>(dims), sizeof(dims));
    // std::complex<double> is layout-compatible with double[2] = (re, im),
    // which is exactly the interleaved on-disk format (little-endian host)
    f.write(reinterpret_cast<const char*>(h.data.data()),
            static_cast<std::streamsize>(h.data.size() * sizeof(cplx)));
    if (!f) throw IoError("short write: " + path);
    f.close();

    nlohmann::json side;
    side["geometry"] = {{"rows", h.geometry.rows},
                       {"cols", h.geometry.cols},
                       {"horizontal_spacing", h.geometry.horizontal_spacing},
                       {"vertical_spacing", h.geometry.vertical_spacing},
                       {"carrier_hz", h.geometry.carrier_hz},
                       {"subcarriers", h.geometry.subcarriers},
                       {"bandwidth_hz", h.geometry.bandwidth_hz}};
    side["track"] = {{"track_id", h.track.track_id},
                    {"region", region_name(h.track.region)},
                    {"snapshots", h.track.snapshots},
                    {"base_azimuth", h.track.base_azimuth},
                    {"azimuth_drift", h.track.azimuth_drift},
                    {"rician_k_db", h.track.rician_k_db},
                    {"multipath_count", h.track.multipath_count},
                    {"snr_db", h.track.snr_db}};
    side["seed"] = seed;
    std::ofstream sf(path + ".json", std::ios::trunc);
    if (!sf) throw IoError("cannot open for writing: " + path + ".json");
    sf << side.dump(2) << "\n";
}

inline CsiTensor read_csi(const std::string& path, std::uint64_t* seed_out = nullptr) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open: " + path);
    char magic[16];
    f.read(magic, sizeof(magic));
    if (!f || std::memcmp(magic, detail::kCsiMagic, sizeof(magic)) != 0)
        throw FormatError("bad magic: " + path);
    std::uint32_t dims[3];
    f.read(reinterpret_cast<char*>(dims), sizeof(dims));
    if (!f) throw FormatError("truncated header: " + path);

    std::ifstream sf(path + ".json");
    if (!sf) throw FormatError("missing sidecar: " + path + ".json");
    nlohmann::json side;
    try {
        sf >> side;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("unreadable sidecar " + path + ".json: " + e.what());
    }

    CsiTensor h;
    try {
        const auto& g = side.at("geometry");
        h.geometry.rows = g.at("rows").get<std::size_t>();
        h.geometry.cols = g.at("cols").get<std::size_t>();
        h.geometry.horizontal_spacing = g.at("horizontal_spacing").get<double>();
        h.geometry.vertical_spacing = g.at("vertical_spacing").get<double>();
        h.geometry.carrier_hz = g.at("carrier_hz").get<double>();
        h.geometry.subcarriers = g.at("subcarriers").get<std::size_t>();
        h.geometry.bandwidth_hz = g.at("bandwidth_hz").get<double>();
        const auto& t = side.at("track");
        h.track.track_id = t.at("track_id").get<int>();
        h.track.region = region_from_name(t.at("region").get<std::string>());
        h.track.snapshots = t.at("snapshots").get<std::size_t>();
        h.track.base_azimuth = t.at("base_azimuth").get<double>();
        h.track.azimuth_drift = t.at("azimuth_drift").get<double>();
        h.track.rician_k_db = t.at("rician_k_db").get<double>();
        h.track.multipath_count = t.at("multipath_count").get<std::size_t>();
        h.track.snr_db = t.at("snr_db").get<double>();
        if (seed_out) *seed_out = side.at("seed").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("sidecar missing fields " + path + ".json: " + e.what());
    }

    if (dims[0] != h.geometry.antennas() || dims[1] != h.geometry.subcarriers ||
        dims[2] != h.track.snapshots)
        throw FormatError("sidecar dimensions disagree with binary header: " + path);

    const std::size_t count =
        static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
    h.data.resize(count);
    f.read(reinterpret_cast<char*>(h.data.data()),
           static_cast<std::streamsize>(count * sizeof(cplx)));
    if (!f || static_cast<std::size_t>(f.gcount()) != count * sizeof(cplx))
        throw FormatError("truncated payload: " + path);
    return h;
}

}  // namespace aoalab
