#include "semfit/cli.hpp"

#include <iostream>

int main(int argc, char** argv) {
    return semfit::cli::run(argc, argv, std::cout, std::cerr);
}
