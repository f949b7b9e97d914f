# This file is part of curvkit
#
# Copyright (C) 2026 curvkit contributors
#
# This program is free software: you can redistribute it and/or modify it under
# the terms of the GNU Affero General Public License as published by the Free
# Software Foundation, either version 3 of the License, or (at your option) any
# later version.
#
# This program is distributed in the hope that it will be useful, but WITHOUT
# ANY WARRANTY; without even the implied warranty of MERCHANTABILITY or FITNESS
# FOR A PARTICULAR PURPOSE. See the GNU Affero General Public License for more
# details.
#
# You should have received a copy of the GNU Affero General Public License along
# with this program. If not, see <https://www.gnu.org/licenses/>.

import sys

from . import cli


def main():
    try:
        code = cli.cli_dispatch(sys.argv[1:])

    except KeyboardInterrupt:
        code = 130

    sys.exit(code)


if __name__ == '__main__':
    main()
