// Writes the run-config JSON Schema to stdout: gen_schema > config/schema.json
#include <iostream>

#include "avdit/cli/config.hpp"

int main() {
    std::cout << avdit::cli::config_schema().dump(2) << "\n";
    return 0;
}
