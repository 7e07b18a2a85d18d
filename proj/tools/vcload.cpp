#include <iostream>

#include "vcload/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return vcload::run_command(args, std::cout, std::cerr);
}
