#include <stochprox_cli/io.hpp>

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

namespace stochprox::cli {

namespace {

std::string header_line(const std::string& schema)
{
    return "# stochprox-csv v" + std::to_string(kCsvVersion) + " " + schema;
}

std::vector<std::string> split_row(const std::string& line)
{
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

// Observations in long format: subject, time, value.
template <class Dataset>
void read_long(const std::string& path, const std::string& schema, const std::string& value_column, Dataset& data)
{
    const CsvTable t = read_csv(path, schema);
    std::map<long, std::vector<std::pair<double, double>>> by_subject;
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        const auto k = static_cast<long>(t.number(i, "subject"));
        by_subject[k].emplace_back(t.number(i, "time"), t.number(i, value_column));
    }
    if (by_subject.empty()) throw FormatError("'" + path + "' has no observations");
    const auto N = static_cast<Index>(by_subject.size());
    const auto J = static_cast<Index>(by_subject.begin()->second.size());
    data.n_subjects = N;
    data.n_times = J;
    data.times.resize(N, J);
    data.y.resize(N, J);
    Index k = 0;
    for (const auto& [id, obs] : by_subject) {
        if (id != k) throw FormatError("'" + path + "': subjects must be numbered 0..N-1");
        if (static_cast<Index>(obs.size()) != J) throw FormatError("'" + path + "': subjects need equal counts");
        for (Index j = 0; j < J; ++j) {
            data.times(k, j) = obs[static_cast<std::size_t>(j)].first;
            data.y(k, j) = obs[static_cast<std::size_t>(j)].second;
        }
        ++k;
    }
}

Matrix read_covariates(const std::string& path, Index N)
{
    const CsvTable t = read_csv(path, "covariates");
    if (static_cast<Index>(t.rows.size()) != N) throw FormatError("'" + path + "': one row per subject expected");
    const auto D = static_cast<Index>(t.columns.size()) - 1;
    Matrix x(N, D);
    for (Index k = 0; k < N; ++k) {
        if (static_cast<Index>(t.number(static_cast<std::size_t>(k), "subject")) != k) {
            throw FormatError("'" + path + "': subjects must be numbered 0..N-1 in order");
        }
        for (Index i = 0; i < D; ++i) x(k, i) = t.number(static_cast<std::size_t>(k), "x" + std::to_string(i + 1));
    }
    return x;
}

void write_covariates(const std::string& path, const Matrix& x)
{
    std::vector<std::string> cols{"subject"};
    for (Index i = 0; i < x.cols(); ++i) cols.push_back("x" + std::to_string(i + 1));
    CsvWriter w(path, "covariates", cols);
    for (Index k = 0; k < x.rows(); ++k) {
        w.cell(static_cast<long>(k));
        for (Index i = 0; i < x.cols(); ++i) w.cell(x(k, i));
        w.end_row();
    }
    w.close();
}

template <class Dataset>
void write_long(const std::string& path, const std::string& schema, const std::string& value_column,
                const Dataset& data)
{
    CsvWriter w(path, schema, {"subject", "time", value_column});
    for (Index k = 0; k < data.n_subjects; ++k) {
        for (Index j = 0; j < data.n_times; ++j) {
            w.cell(static_cast<long>(k)).cell(data.times(k, j)).cell(data.y(k, j));
            w.end_row();
        }
    }
    w.close();
}

} // namespace

std::string format_number(double x)
{
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
    if (ec != std::errc{}) throw FormatError("number formatting failed");
    return std::string(buf, ptr);
}

struct CsvWriter::Impl
{
    std::string path;
    std::ofstream out;
    std::size_t columns = 0;
    std::size_t filled = 0;
};

CsvWriter::CsvWriter(const std::string& path, const std::string& schema, const std::vector<std::string>& columns)
    : impl_(new Impl)
{
    impl_->path = path;
    impl_->columns = columns.size();
    impl_->out.open(path, std::ios::binary | std::ios::trunc);
    if (!impl_->out) {
        delete impl_;
        throw std::runtime_error("cannot write '" + path + "'");
    }
    impl_->out << header_line(schema) << '\n';
    for (std::size_t i = 0; i < columns.size(); ++i) impl_->out << (i ? "," : "") << columns[i];
    impl_->out << '\n';
}

CsvWriter::~CsvWriter() { delete impl_; }

CsvWriter& CsvWriter::cell(const std::string& value)
{
    if (value.find_first_of(",\n") != std::string::npos) {
        throw FormatError("CSV cell may not contain ',' or newlines: '" + value + "'");
    }
    if (impl_->filled >= impl_->columns) throw FormatError("too many cells in a row of '" + impl_->path + "'");
    impl_->out << (impl_->filled ? "," : "") << value;
    ++impl_->filled;
    return *this;
}

CsvWriter& CsvWriter::cell(double value) { return cell(format_number(value)); }

CsvWriter& CsvWriter::cell(long value) { return cell(std::to_string(value)); }

CsvWriter& CsvWriter::empty() { return cell(std::string()); }

void CsvWriter::end_row()
{
    if (impl_->filled != impl_->columns) throw FormatError("incomplete row in '" + impl_->path + "'");
    impl_->out << '\n';
    impl_->filled = 0;
}

void CsvWriter::close()
{
    impl_->out.close();
    if (!impl_->out) throw std::runtime_error("error writing '" + impl_->path + "'");
}

std::size_t CsvTable::column(const std::string& name) const
{
    for (std::size_t i = 0; i < columns.size(); ++i) {
        if (columns[i] == name) return i;
    }
    throw FormatError("missing column '" + name + "' in " + schema + " table");
}

double CsvTable::number(std::size_t row, const std::string& name) const
{
    const std::string& v = rows.at(row).at(column(name));
    try {
        std::size_t used = 0;
        const double x = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw FormatError("column '" + name + "' row " + std::to_string(row) + ": not a number: '" + v + "'");
    }
}

CsvTable read_csv(const std::string& path, const std::string& schema)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot read '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw FormatError("'" + path + "' is empty");
    const std::string expected = header_line(schema);
    if (line != expected) {
        throw FormatError("'" + path + "': expected header '" + expected + "', found '" + line + "'");
    }
    CsvTable t;
    t.schema = schema;
    if (!std::getline(in, line)) throw FormatError("'" + path + "' has no column header");
    t.columns = split_row(line);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto cells = split_row(line);
        if (cells.size() != t.columns.size()) {
            throw FormatError("'" + path + "': row with " + std::to_string(cells.size()) + " cells, expected " +
                              std::to_string(t.columns.size()));
        }
        t.rows.push_back(std::move(cells));
    }
    return t;
}

void ensure_directory(const std::string& dir)
{
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec || !std::filesystem::is_directory(dir)) {
        throw std::runtime_error("cannot create output directory '" + dir + "'");
    }
}

void write_text(const std::string& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    out << text;
    out.close();
    if (!out) throw std::runtime_error("error writing '" + path + "'");
}

void write_toy_dataset(const std::string& dir, const LmmDataset& data)
{
    ensure_directory(dir);
    write_long(dir + "/observations.csv", "toy-observations", "y", data);
    write_covariates(dir + "/covariates.csv", data.covariates);
}

LmmDataset read_toy_dataset(const std::string& dir)
{
    LmmDataset data;
    read_long(dir + "/observations.csv", "toy-observations", "y", data);
    data.covariates = read_covariates(dir + "/covariates.csv", data.n_subjects);
    data.n_covariates = data.covariates.cols();
    data.validate();
    return data;
}

void write_pk_dataset(const std::string& dir, const PkDataset& data)
{
    ensure_directory(dir);
    write_long(dir + "/observations.csv", "pk-observations", "concentration", data);
    write_covariates(dir + "/covariates.csv", data.covariates);
}

PkDataset read_pk_dataset(const std::string& dir, double dose)
{
    PkDataset data;
    read_long(dir + "/observations.csv", "pk-observations", "concentration", data);
    data.covariates = read_covariates(dir + "/covariates.csv", data.n_subjects);
    data.n_covariates = data.covariates.cols();
    data.dose = dose;
    data.validate();
    return data;
}

} // namespace stochprox::cli
