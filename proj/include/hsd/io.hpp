#pragma once

#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "errors.hpp"

namespace hsd {

// CSV with a block of "# key: value" lines ahead of the header row.
class CsvWriter {
public:
    CsvWriter(const std::string& path, std::vector<std::string> columns,
              const std::vector<std::pair<std::string, std::string>>& meta = {})
        : os_(path), ncol_(columns.size())
    {
        if (!os_) throw InvalidParams("cannot open '" + path + "' for writing");
        os_.precision(17);
        for (const auto& [k, v] : meta) os_ << "# " << k << ": " << v << '\n';
        for (std::size_t i = 0; i < columns.size(); ++i) os_ << (i ? "," : "") << columns[i];
        os_ << '\n';
    }

    template <class... Ts>
    void row(const Ts&... values)
    {
        static_assert(sizeof...(Ts) > 0);
        if (sizeof...(Ts) != ncol_) throw InvalidParams("CSV row width does not match the header");
        std::size_t i = 0;
        ((os_ << (i++ ? "," : "") << values), ...);
        os_ << '\n';
    }

private:
    std::ofstream os_;
    std::size_t ncol_;
};

struct CsvTable {
    std::map<std::string, std::string> meta;
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;

    std::size_t column(const std::string& name) const
    {
        for (std::size_t i = 0; i < columns.size(); ++i)
            if (columns[i] == name) return i;
        throw InvalidParams("no column '" + name + "'");
    }

    std::vector<double> numbers(const std::string& name) const
    {
        const auto c = column(name);
        std::vector<double> out;
        for (const auto& r : rows) out.push_back(std::stod(r.at(c)));
        return out;
    }
};

inline std::vector<std::string> split_csv_line(const std::string& line)
{
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

inline CsvTable read_csv(const std::string& path)
{
    std::ifstream is(path);
    if (!is) throw InvalidParams("cannot open '" + path + "'");
    CsvTable t;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        if (line.rfind("# ", 0) == 0) {
            const auto colon = line.find(": ");
            if (colon != std::string::npos) t.meta[line.substr(2, colon - 2)] = line.substr(colon + 2);
            continue;
        }
        if (t.columns.empty())
            t.columns = split_csv_line(line);
        else
            t.rows.push_back(split_csv_line(line));
    }
    return t;
}

}  // namespace hsd
