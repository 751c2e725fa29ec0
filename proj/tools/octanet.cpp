#include <iostream>
#include <vector>

#include "octa/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return octa::cli::run(args, std::cout, std::cerr);
}
