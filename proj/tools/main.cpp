#include <iostream>

#include "phaforce/cli.hpp"

int main(int argc, char** argv) {
    return phaforce::cli::run(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
