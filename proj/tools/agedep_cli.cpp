#include <iostream>

#include "agedep/cli.hpp"

int main(int argc, char** argv) {
    return agedep::cli::run(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
