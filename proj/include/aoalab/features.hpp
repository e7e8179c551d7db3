#pragma once

// Sliding-window angle estimation over CSI tensors. Two estimators share the
// same covariance front end: a subspace grid scan with parabolic peak
// refinement, and a scan-free rotational-invariance solver that only needs
// the dominant eigenvectors. Window-level extraction assembles one feature
// vector per window position with a fixed (row, subcarrier) ordering.

#include <aoalab/channel.hpp>
#include <aoalab/errors.hpp>
#include <aoalab/linalg.hpp>

#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

namespace aoalab {

enum class Estimator { MUSIC, ESPRIT };

inline std::string estimator_name(Estimator e) {
    return e == Estimator::MUSIC ? "MUSIC" : "ESPRIT";
}

inline Estimator estimator_from_name(const std::string& s) {
    if (s == "MUSIC") return Estimator::MUSIC;
    if (s == "ESPRIT") return Estimator::ESPRIT;
    throw FormatError("unknown estimator name: " + s);
}

struct WindowPlan {
    std::size_t window = 2000;
    double shift_ratio = 0.5;
    std::size_t windows_per_track = 0;  // derived, see make_window_plan
};

inline std::size_t window_count(std::size_t window, double shift_ratio, std::size_t snapshots) {
    if (window == 0 || window > snapshots) return 0;
    const double shift = static_cast<double>(window) * shift_ratio;
    return static_cast<std::size_t>(
               std::floor(static_cast<double>(snapshots - window) / shift)) +
           1;
}

inline WindowPlan make_window_plan(std::size_t window, double shift_ratio,
                                   std::size_t snapshots) {
    if (window < 64) throw InvalidArgument("window below the 64-snapshot minimum");
    if (!(shift_ratio > 0.0) || !(shift_ratio <= 1.0))
        throw InvalidArgument("shift ratio must lie in (0, 1]");
    if (window > snapshots) throw InvalidArgument("window longer than the track");
    WindowPlan plan;
    plan.window = window;
    plan.shift_ratio = shift_ratio;
    plan.windows_per_track = window_count(window, shift_ratio, snapshots);
    return plan;
}

struct AoaSample {
    std::vector<double> features;  // degrees, index = row * subcarriers + subcarrier
    Region region = Region::LoS;
    int track_id = 0;
    std::size_t window_index = 0;
    Estimator estimator = Estimator::MUSIC;
    bool valid = true;
    bool synthetic = false;  // generated rather than extracted from a channel stream
};

struct MusicResult {
    double azimuth = 0.0;
    std::vector<double> spectrum;  // 1/d(theta) over the scan grid
    double grid_start = -90.0;
    double grid_step = 0.1;
};

struct ExtractionStats {
    std::size_t clipped = 0;  // arcsin arguments pushed back into [-1, 1]
    std::size_t invalid = 0;  // estimates flagged invalid (degenerate streams)
};

namespace detail {

inline ComplexMatrix checked_covariance(const ComplexMatrix& snapshots, const char* who) {
    auto r = sample_covariance(snapshots);
    const double scale = frobenius_norm(r);
    if (!(scale > 0.0) || !std::isfinite(scale))
        throw DegenerateCovariance(std::string(who) + ": covariance is zero or non-finite");
    return r;
}

inline double clamp_azimuth(double az) { return std::min(90.0, std::max(-90.0, az)); }

}  // namespace detail

// Subspace scan: eigendecompose the sample covariance, keep the
// (sensors - num_sources) smallest eigenvectors as the noise subspace E_n,
// scan d(theta) = ||E_n^H a(theta)||^2 over [-90, 90] at grid_step and return
// the spectrum 1/d plus the argmax refined by a 3-point parabola. The
// parabola is fitted to d itself: near the optimum d is locally quadratic
// while 1/d has a near-singular peak that biases the vertex.
inline MusicResult music_estimate(const ComplexMatrix& snapshots, std::size_t num_sources,
                                  double grid_step, double spacing = 0.5) {
    const std::size_t n = snapshots.rows;
    if (n < 2) throw InvalidArgument("need at least two sensors");
    if (num_sources == 0) throw InvalidArgument("need at least one source");
    if (num_sources >= n)
        throw TooManySources("source count must stay below the sensor count");
    if (!(grid_step > 0.0)) throw InvalidArgument("grid step must be positive");
    if (!(spacing > 0.0)) throw InvalidArgument("sensor spacing must be positive");

    const auto r = detail::checked_covariance(snapshots, "music_estimate");
    const auto eig = hermitian_eig(r);

    const std::size_t points =
        static_cast<std::size_t>(std::floor(180.0 / grid_step + 1e-9)) + 1;
    std::vector<double> null_spec(points);
    MusicResult out;
    out.grid_step = grid_step;
    out.spectrum.resize(points);

    constexpr double kDegToRad = 3.14159265358979323846 / 180.0;
    constexpr double kTwoPi = 2.0 * 3.14159265358979323846;
    std::vector<cplx> a(n);
    std::size_t best = 0;
    for (std::size_t i = 0; i < points; ++i) {
        const double theta = -90.0 + static_cast<double>(i) * grid_step;
        const double phi = -kTwoPi * spacing * std::sin(theta * kDegToRad);
        const cplx w(std::cos(phi), std::sin(phi));
        a[0] = cplx(1.0, 0.0);
        for (std::size_t c = 1; c < n; ++c) a[c] = a[c - 1] * w;
        double d = 0.0;
        for (std::size_t col = num_sources; col < n; ++col) {
            cplx acc(0.0, 0.0);
            for (std::size_t c = 0; c < n; ++c)
                acc += std::conj(eig.eigenvectors.at(c, col)) * a[c];
            d += std::norm(acc);
        }
        null_spec[i] = d;
        out.spectrum[i] = 1.0 / std::max(d, 1e-300);
        if (d < null_spec[best]) best = i;
    }

    double offset = 0.0;
    if (best > 0 && best + 1 < points) {
        const double dm = null_spec[best - 1], d0 = null_spec[best], dp = null_spec[best + 1];
        const double denom = dm - 2.0 * d0 + dp;
        if (denom > 0.0) offset = std::min(0.5, std::max(-0.5, 0.5 * (dm - dp) / denom));
    }
    out.azimuth =
        detail::clamp_azimuth(-90.0 + (static_cast<double>(best) + offset) * grid_step);
    return out;
}

// Rotational invariance with maximal-overlap subarrays (sensors 0..n-2 and
// 1..n-1): the signal subspace comes from the dominant eigenpairs only, the
// subarray rotation Phi from a least-squares solve, and the azimuth from the
// phase of Phi's strongest eigenvalue. No scan grid is involved.
inline double esprit_estimate(const ComplexMatrix& snapshots, std::size_t num_sources,
                              double spacing = 0.5, bool* clipped = nullptr) {
    const std::size_t n = snapshots.rows;
    if (n < 2) throw InvalidArgument("need at least two sensors");
    if (num_sources == 0) throw InvalidArgument("need at least one source");
    if (num_sources > n - 1)
        throw TooManySources("source count exceeds the subarray size");
    if (!(spacing > 0.0)) throw InvalidArgument("sensor spacing must be positive");

    const auto r = detail::checked_covariance(snapshots, "esprit_estimate");
    const auto eig = dominant_eigenpairs(r, num_sources);

    ComplexMatrix upper(n - 1, num_sources), lower(n - 1, num_sources);
    for (std::size_t i = 0; i + 1 < n; ++i)
        for (std::size_t k = 0; k < num_sources; ++k) {
            upper.at(i, k) = eig.eigenvectors.at(i, k);
            lower.at(i, k) = eig.eigenvectors.at(i + 1, k);
        }
    const auto phi = least_squares(upper, lower).solution;

    cplx rotation;
    if (num_sources == 1) {
        rotation = phi.at(0, 0);
    } else {
        const auto vals = detail::dense_eigenvalues(phi);
        rotation = vals.front();
        for (const auto& v : vals)
            if (std::abs(v) > std::abs(rotation)) rotation = v;
    }

    constexpr double kTwoPi = 2.0 * 3.14159265358979323846;
    double s = -std::arg(rotation) / (kTwoPi * spacing);
    if (s > 1.0 || s < -1.0) {
        if (clipped) *clipped = true;
        s = std::min(1.0, std::max(-1.0, s));
    }
    return detail::clamp_azimuth(std::asin(s) * 180.0 / 3.14159265358979323846);
}

// One feature vector per window position: for each (row, subcarrier) pair the
// chosen estimator runs on that row's sensors-by-window snapshot block.
// Feature index = row * subcarriers + subcarrier. Degenerate streams yield
// 0.0 with the sample marked invalid instead of aborting the batch.
inline std::vector<AoaSample> extract_features(const CsiTensor& csi, const WindowPlan& plan,
                                               Estimator estimator, std::size_t num_sources = 1,
                                               ExtractionStats* stats = nullptr) {
    const std::size_t t_count = csi.track.snapshots;
    const std::size_t w = plan.window;
    if (w < 64) throw InvalidArgument("window below the 64-snapshot minimum");
    if (!(plan.shift_ratio > 0.0) || !(plan.shift_ratio <= 1.0))
        throw InvalidArgument("shift ratio must lie in (0, 1]");
    if (w > t_count) throw InvalidArgument("window longer than the track");

    const std::size_t rows = csi.geometry.rows;
    const std::size_t cols = csi.geometry.cols;
    const std::size_t m_count = csi.geometry.subcarriers;
    const double spacing = csi.geometry.horizontal_spacing;
    const std::size_t count = window_count(w, plan.shift_ratio, t_count);
    const double shift = static_cast<double>(w) * plan.shift_ratio;
    constexpr double kGridStep = 0.1;

    std::vector<AoaSample> samples;
    samples.reserve(count);
    ComplexMatrix block(cols, w);
    for (std::size_t win = 0; win < count; ++win) {
        const std::size_t start =
            static_cast<std::size_t>(std::floor(static_cast<double>(win) * shift));
        AoaSample sample;
        sample.features.assign(rows * m_count, 0.0);
        sample.region = csi.track.region;
        sample.track_id = csi.track.track_id;
        sample.window_index = win;
        sample.estimator = estimator;
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t m = 0; m < m_count; ++m) {
                for (std::size_t c = 0; c < cols; ++c)
                    std::memcpy(&block.at(c, 0), &csi.at(r * cols + c, m, start),
                                w * sizeof(cplx));
                double az = 0.0;
                try {
                    if (estimator == Estimator::MUSIC) {
                        az = music_estimate(block, num_sources, kGridStep, spacing).azimuth;
                    } else {
                        bool clip = false;
                        az = esprit_estimate(block, num_sources, spacing, &clip);
                        if (clip && stats) ++stats->clipped;
                    }
                } catch (const DegenerateCovariance&) {
                    sample.valid = false;
                    if (stats) ++stats->invalid;
                } catch (const RankDeficient&) {
                    sample.valid = false;
                    if (stats) ++stats->invalid;
                } catch (const NoConvergence&) {
                    sample.valid = false;
                    if (stats) ++stats->invalid;
                } catch (const InvalidArgument& e) {
                    throw InvalidArgument("window " + std::to_string(win) + " row " +
                                          std::to_string(r) + " subcarrier " +
                                          std::to_string(m) + ": " + e.what());
                }
                sample.features[r * m_count + m] = detail::clamp_azimuth(az);
            }
        }
        samples.push_back(std::move(sample));
    }
    return samples;
}

struct EstimatorTiming {
    std::size_t estimates = 0;
    double total_seconds = 0.0;
    double mean_ms = 0.0;
};

struct TimingReport {
    EstimatorTiming music;
    EstimatorTiming esprit;
    double ratio = 0.0;  // music total over esprit total
};

// Wall-clock comparison of the two estimators over identical workloads.
// A window longer than the track yields the empty report rather than an
// error, so callers can probe arbitrary plans.
inline TimingReport benchmark_estimators(const CsiTensor& csi, const WindowPlan& plan,
                                         std::size_t num_sources = 1) {
    TimingReport report;
    if (plan.window > csi.track.snapshots || plan.window < 64) return report;

    const std::size_t count = window_count(plan.window, plan.shift_ratio, csi.track.snapshots) *
                              csi.geometry.rows * csi.geometry.subcarriers;
    auto run = [&](Estimator which, EstimatorTiming& slot) {
        const auto begin = std::chrono::steady_clock::now();
        auto samples = extract_features(csi, plan, which, num_sources);
        const auto end = std::chrono::steady_clock::now();
        slot.estimates = count;
        slot.total_seconds = std::chrono::duration<double>(end - begin).count();
        slot.mean_ms = slot.total_seconds * 1000.0 / static_cast<double>(std::max<std::size_t>(count, 1));
        (void)samples;
    };
    run(Estimator::MUSIC, report.music);
    run(Estimator::ESPRIT, report.esprit);
    report.ratio =
        report.esprit.total_seconds > 0.0 ? report.music.total_seconds / report.esprit.total_seconds
                                          : 0.0;
    return report;
}

// ---------------------------------------------------------------------------
// feature CSV: header f000..fNNN,region,track_id,window_index,estimator,valid
// (6 decimal places, LF line endings)

inline void write_features_csv(const std::string& path, const std::vector<AoaSample>& samples) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open for writing: " + path);
    const std::size_t width = samples.empty() ? 200 : samples.front().features.size();
    for (std::size_t i = 0; i < width; ++i) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "f%03u,", static_cast<unsigned>(i));
        f << buf;
    }
    f << "region,track_id,window_index,estimator,valid\n";
    for (const auto& s : samples) {
        if (s.features.size() != width)
            throw InvalidArgument("inconsistent feature widths in one file");
        char buf[32];
        for (double v : s.features) {
            std::snprintf(buf, sizeof(buf), "%.6f,", v);
            f << buf;
        }
        f << region_name(s.region) << ',' << s.track_id << ',' << s.window_index << ','
          << estimator_name(s.estimator) << ',' << (s.valid ? 1 : 0) << '\n';
    }
    if (!f) throw IoError("short write: " + path);
}

inline std::vector<AoaSample> read_features_csv(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open: " + path);

    auto split = [](const std::string& line) {
        std::vector<std::string> out;
        std::size_t start = 0;
        while (true) {
            const auto pos = line.find(',', start);
            if (pos == std::string::npos) {
                out.push_back(line.substr(start));
                break;
            }
            out.push_back(line.substr(start, pos - start));
            start = pos + 1;
        }
        return out;
    };

    std::string header;
    if (!std::getline(f, header)) throw FormatError("empty feature file: " + path);
    if (!header.empty() && header.back() == '\r') header.pop_back();
    auto names = split(header);
    std::size_t width = 0;
    while (width < names.size()) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "f%03u", static_cast<unsigned>(width));
        if (names[width] != buf) break;
        ++width;
    }
    const std::vector<std::string> tail{"region", "track_id", "window_index", "estimator",
                                        "valid"};
    if (width == 0 || names.size() != width + tail.size())
        throw FormatError("malformed feature header: " + path);
    for (std::size_t i = 0; i < tail.size(); ++i)
        if (names[width + i] != tail[i]) throw FormatError("malformed feature header: " + path);

    std::vector<AoaSample> out;
    std::string line;
    std::size_t lineno = 1;
    while (std::getline(f, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto cells = split(line);
        if (cells.size() != width + tail.size())
            throw FormatError(path + ":" + std::to_string(lineno) + ": wrong column count");
        AoaSample s;
        s.features.resize(width);
        auto parse_double = [&](const std::string& cell) {
            char* end = nullptr;
            const double v = std::strtod(cell.c_str(), &end);
            if (end == cell.c_str() || *end != '\0')
                throw FormatError(path + ":" + std::to_string(lineno) + ": bad number '" + cell +
                                  "'");
            return v;
        };
        for (std::size_t i = 0; i < width; ++i) s.features[i] = parse_double(cells[i]);
        try {
            s.region = region_from_name(cells[width]);
            s.estimator = estimator_from_name(cells[width + 3]);
        } catch (const FormatError& e) {
            throw FormatError(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
        s.track_id = static_cast<int>(parse_double(cells[width + 1]));
        s.window_index = static_cast<std::size_t>(parse_double(cells[width + 2]));
        const std::string& v = cells[width + 4];
        if (v == "1")
            s.valid = true;
        else if (v == "0")
            s.valid = false;
        else
            throw FormatError(path + ":" + std::to_string(lineno) + ": bad validity flag '" + v +
                              "'");
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace aoalab
