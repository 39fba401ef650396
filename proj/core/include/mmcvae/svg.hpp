#ifndef MMCVAE_SVG_HPP
#define MMCVAE_SVG_HPP

#include <string>
#include <vector>

#include "mmcvae/tensor.hpp"

namespace mmcvae {

/// Scatter plot of an n × 2 matrix, one color per distinct label.
std::string svg_scatter(const Matrix& points, const std::vector<int>& labels, const std::string& title,
                        const std::vector<std::string>& label_names = {});

/// Heatmap with one annotated cell per entry; NaN cells are drawn grey.
std::string svg_heatmap(const Matrix& values, const std::vector<std::string>& row_labels,
                        const std::vector<std::string>& col_labels, const std::string& title,
                        const std::string& row_axis, const std::string& col_axis);

}  // namespace mmcvae

#endif
