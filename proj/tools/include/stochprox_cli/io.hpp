#pragma once
#include <stochprox/lmm_toy.hpp>
#include <stochprox/nlme_pk.hpp>

#include <string>
#include <vector>

namespace stochprox::cli {

// Every CSV starts with "# stochprox-csv v<version> <schema>".
inline constexpr int kCsvVersion = 1;

// Unreadable files, schema or version mismatches.
class FormatError : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

/// Shortest decimal text that parses back to the same double.
std::string format_number(double x);

class CsvWriter
{
public:
    CsvWriter(const std::string& path, const std::string& schema, const std::vector<std::string>& columns);
    ~CsvWriter();
    CsvWriter(const CsvWriter&) = delete;
    CsvWriter& operator=(const CsvWriter&) = delete;

    CsvWriter& cell(const std::string& value);
    CsvWriter& cell(double value);
    CsvWriter& cell(long value);
    CsvWriter& cell(int value) { return cell(static_cast<long>(value)); }
    CsvWriter& empty();
    void end_row();
    void close();

private:
    struct Impl;
    Impl* impl_;
};

struct CsvTable
{
    std::string schema;
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;

    std::size_t column(const std::string& name) const;
    double number(std::size_t row, const std::string& name) const;
};

/// Reads a CSV and checks the version line against `schema`.
CsvTable read_csv(const std::string& path, const std::string& schema);

void ensure_directory(const std::string& dir);
void write_text(const std::string& path, const std::string& text);

void write_toy_dataset(const std::string& dir, const LmmDataset& data);
LmmDataset read_toy_dataset(const std::string& dir);

void write_pk_dataset(const std::string& dir, const PkDataset& data);
PkDataset read_pk_dataset(const std::string& dir, double dose);

} // namespace stochprox::cli
