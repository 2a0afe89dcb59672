#include <stochprox_cli/plots.hpp>

#include <sstream>

namespace stochprox::cli {

namespace {

void preamble(std::ostringstream& out, const std::string& output)
{
    out << "# gnuplot script; run from this directory with: gnuplot " << output << ".gp\n"
        << "set datafile separator ','\n"
        << "set terminal pngcairo size 1200,800\n"
        << "set output '" << output << ".png'\n";
}

} // namespace

std::string trace_plot_script(const std::vector<std::string>& theta_columns)
{
    std::ostringstream out;
    preamble(out, "trace");
    out << "set multiplot layout 2,1\n"
        << "set logscale x\n"
        << "set xlabel 'iteration'\n"
        << "set title 'support coordinates'\n";
    if (theta_columns.empty()) {
        out << "plot 'trace.csv' every ::1 using 1:7 with lines title 'support size'\n";
    } else {
        out << "plot ";
        for (std::size_t i = 0; i < theta_columns.size(); ++i) {
            out << (i ? ", \\\n     " : "") << "'theta.csv' every ::1 using 1:(column('" << theta_columns[i]
                << "')) with lines title '" << theta_columns[i] << "'";
        }
        out << '\n';
    }
    out << "set title 'objective'\n"
        << "plot 'trace.csv' every ::1 using 1:5 with lines title 'F'\n"
        << "unset multiplot\n";
    return out.str();
}

std::string rate_plot_script(long panels)
{
    std::ostringstream out;
    preamble(out, "rate");
    out << "set multiplot layout 1," << panels << "\n"
        << "set logscale xy\n"
        << "set xlabel 'iteration'\n"
        << "set ylabel 'L2 error of the statistic'\n";
    for (long p = 0; p < panels; ++p) {
        out << "set title 'panel " << p << "'\n"
            << "plot 'rate.csv' every ::1 using 7:($1==" << p << " ? $8 : 1/0) with lines notitle\n";
    }
    out << "unset multiplot\n";
    return out.str();
}

std::string path_plot_script(long coefficients, double selected_lambda)
{
    std::ostringstream out;
    preamble(out, "path");
    out << "set logscale x\n"
        << "set xlabel 'lambda'\n"
        << "set ylabel 'coefficient'\n"
        << "set arrow from " << selected_lambda << ", graph 0 to " << selected_lambda
        << ", graph 1 nohead dashtype 2 lc rgb 'black'\n"
        << "plot for [i=3:" << coefficients + 2 << "] 'path_coefficients.csv' every ::1 using 2:i with lines notitle\n";
    return out.str();
}

std::string compare_plot_script(const std::vector<std::string>& algorithms)
{
    std::ostringstream out;
    preamble(out, "compare");
    out << "set style data boxplot\n"
        << "set ylabel 'max deviation from EM-pen'\n"
        << "set logscale y\n"
        << "set xtics (";
    for (std::size_t i = 0; i < algorithms.size(); ++i) {
        out << (i ? ", " : "") << "'" << algorithms[i] << "' " << i;
    }
    out << ")\n"
        << "plot for [a=0:" << static_cast<long>(algorithms.size()) - 1
        << "] 'compare.csv' every ::1 using (a):(strcol(1) eq word('";
    for (std::size_t i = 0; i < algorithms.size(); ++i) out << (i ? " " : "") << algorithms[i];
    out << "', a+1) ? $3 : 1/0) notitle\n";
    return out.str();
}

} // namespace stochprox::cli
