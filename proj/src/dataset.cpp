#include "gsnn/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>

namespace gsnn {

std::vector<IrregularSeries> generate_synthetic_control(int n_per_class, int length,
                                                        std::uint64_t seed) {
    if (length < 8) throw std::invalid_argument("generate_synthetic_control: length < 8");
    if (n_per_class < 1)
        throw std::invalid_argument("generate_synthetic_control: n_per_class < 1");

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> noise(-3.0, 3.0);
    std::uniform_real_distribution<double> amp(10.0, 15.0);
    std::uniform_real_distribution<double> period(10.0, 15.0);
    std::uniform_real_distribution<double> gradient(0.2, 0.5);
    std::uniform_real_distribution<double> shift(7.5, 20.0);
    std::uniform_real_distribution<double> breakpoint(length / 3.0, 2.0 * length / 3.0);

    const std::vector<double> grid = uniform_grid(length);
    const double base = 30.0, scale = 2.0;

    std::vector<IrregularSeries> out;
    out.reserve(6 * static_cast<std::size_t>(n_per_class));
    for (int label = 0; label < 6; ++label) {
        for (int i = 0; i < n_per_class; ++i) {
            IrregularSeries s;
            s.locations = grid;
            s.values.resize(length);
            s.label = label;
            const double a = amp(rng), t_period = period(rng), g = gradient(rng),
                         k = shift(rng), t_break = breakpoint(rng);
            for (int t = 0; t < length; ++t) {
                double v = base + scale * noise(rng);
                switch (label) {
                    case 0: break;  // normal
                    case 1: v += a * std::sin(2.0 * std::numbers::pi * t / t_period); break;
                    case 2: v += g * t; break;
                    case 3: v -= g * t; break;
                    case 4: v += t >= t_break ? k : 0.0; break;
                    case 5: v -= t >= t_break ? k : 0.0; break;
                }
                s.values[t] = v;
            }
            // Per-series z-scoring.
            double mean = 0.0;
            for (double v : s.values) mean += v;
            mean /= length;
            double var = 0.0;
            for (double v : s.values) var += (v - mean) * (v - mean);
            const double sd = std::sqrt(var / length);
            for (double& v : s.values) v = (v - mean) / (sd > 0.0 ? sd : 1.0);
            out.push_back(std::move(s));
        }
    }
    return out;
}

std::vector<int> subsample_mask(int length, double fraction, std::uint64_t seed) {
    if (!(fraction > 0.0) || fraction > 1.0)
        throw std::invalid_argument("subsample_mask: fraction must be in (0, 1]");
    const int keep = static_cast<int>(std::ceil(fraction * length));
    std::vector<int> indices(length);
    for (int i = 0; i < length; ++i) indices[i] = i;
    std::mt19937_64 rng(seed);
    // Partial Fisher-Yates: the first `keep` entries are a uniform subset.
    for (int i = 0; i < keep; ++i) {
        std::uniform_int_distribution<int> pick(i, length - 1);
        std::swap(indices[i], indices[pick(rng)]);
    }
    indices.resize(keep);
    std::sort(indices.begin(), indices.end());
    return indices;
}

IrregularSeries subsample(const IrregularSeries& s, const std::vector<int>& mask) {
    IrregularSeries out;
    out.label = s.label;
    out.locations.reserve(mask.size());
    out.values.reserve(mask.size());
    for (int idx : mask) {
        if (idx < 0 || idx >= static_cast<int>(s.locations.size()))
            throw std::invalid_argument("subsample: mask index out of range");
        out.locations.push_back(s.locations[idx]);
        out.values.push_back(s.values[idx]);
    }
    return out;
}

IrregularSeries subsample(const IrregularSeries& s, double fraction, std::uint64_t seed) {
    return subsample(s, subsample_mask(static_cast<int>(s.locations.size()), fraction, seed));
}

void write_series_csv(const std::string& path, const std::vector<IrregularSeries>& series) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_series_csv: cannot open " + path);
    out << "series_id,location,value,label\n";
    char buf[96];
    for (std::size_t id = 0; id < series.size(); ++id) {
        const auto& s = series[id];
        for (std::size_t i = 0; i < s.locations.size(); ++i) {
            std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%d\n", id, s.locations[i],
                          s.values[i], s.label);
            out << buf;
        }
    }
}

std::vector<IrregularSeries> read_series_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("read_series_csv: cannot open " + path);
    std::string line;
    if (!std::getline(in, line))
        throw std::invalid_argument("read_series_csv: empty file");

    std::map<long, IrregularSeries> by_id;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        long id;
        double loc, val;
        int label;
        if (std::sscanf(line.c_str(), "%ld,%lg,%lg,%d", &id, &loc, &val, &label) != 4)
            throw std::invalid_argument("read_series_csv: malformed row: " + line);
        auto& s = by_id[id];
        s.locations.push_back(loc);
        s.values.push_back(val);
        s.label = label;
    }
    std::vector<IrregularSeries> out;
    out.reserve(by_id.size());
    for (auto& [id, s] : by_id) {
        validate_series(s);
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace gsnn
