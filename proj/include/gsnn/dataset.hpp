#pragma once

#include "gsnn/gp.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace gsnn {

// Six-class control-chart generator (normal, cyclic, increasing trend,
// decreasing trend, upward shift, downward shift) on a uniform grid over
// [0, 1], z-scored per series. Deterministic per seed.
std::vector<IrregularSeries> generate_synthetic_control(int n_per_class, int length,
                                                        std::uint64_t seed);

// ceil(fraction * length) indices drawn uniformly without replacement, sorted.
std::vector<int> subsample_mask(int length, double fraction, std::uint64_t seed);

IrregularSeries subsample(const IrregularSeries& s, const std::vector<int>& mask);
IrregularSeries subsample(const IrregularSeries& s, double fraction, std::uint64_t seed);

// CSV rows: series_id,location,value,label
void write_series_csv(const std::string& path, const std::vector<IrregularSeries>& series);
std::vector<IrregularSeries> read_series_csv(const std::string& path);

}  // namespace gsnn
