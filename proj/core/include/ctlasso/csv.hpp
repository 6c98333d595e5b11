#pragma once

#include <string>
#include <vector>

namespace ctlasso {

// Minimal RFC-4180-ish CSV support: comma separator, optional double-quote
// escaping, '.' decimal separator, UTF-8 passthrough. Lines starting with
// '#' are treated as comments and skipped on read.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    int column(const std::string& name) const;  // -1 when absent
};

CsvTable read_csv(const std::string& path);
CsvTable parse_csv(const std::string& text);

std::string csv_escape(const std::string& field);

std::string read_text_file(const std::string& path);

// Atomic-ish write: fails loudly instead of producing a partial file.
void write_text_file(const std::string& path, const std::string& content);

}  // namespace ctlasso
