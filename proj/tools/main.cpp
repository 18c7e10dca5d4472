#include <iostream>

#include "okp/cli.hpp"

int main(int argc, char** argv)
{
    return okp::run_cli({argv + 1, argv + argc}, std::cout, std::cerr);
}
