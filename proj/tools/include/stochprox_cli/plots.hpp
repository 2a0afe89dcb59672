#pragma once
#include <string>
#include <vector>

namespace stochprox::cli {

// Standalone gnuplot scripts that read the CSVs written next to them.

std::string trace_plot_script(const std::vector<std::string>& theta_columns);
std::string rate_plot_script(long panels);
std::string path_plot_script(long coefficients, double selected_lambda);
std::string compare_plot_script(const std::vector<std::string>& algorithms);

} // namespace stochprox::cli
