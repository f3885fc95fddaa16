#include <iostream>

#include "sni_sight/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return sni_sight::cli::run(args, std::cout, std::cerr);
}
