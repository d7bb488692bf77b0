#include <iostream>
#include <string>
#include <vector>

#include "visreg/cli.hpp"

int main(int argc, char** argv) {
    return visreg::run_cli(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
