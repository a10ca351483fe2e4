#include "mixar/cli.hpp"

int main(int argc, char** argv)
{
    return mixar::cli::cli_main(argc, argv);
}
