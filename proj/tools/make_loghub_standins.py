#!/usr/bin/env python3
# Copyright 2026 The metalog Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#      http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Writes Apache_2k.log and Linux_2k.log stand-ins in the loghub line formats.

Used by the miner determinism check when the real loghub samples are not
available (set LOGHUB_DIR to point the check at the real files instead).
"""

import argparse
import datetime
import pathlib
import random

DAYS = ["Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun"]
MONTHS = ["Jan", "Feb", "Mar", "Apr", "May", "Jun", "Jul", "Aug", "Sep", "Oct", "Nov", "Dec"]


def ip(rng):
    return ".".join(str(rng.randrange(1, 255)) for _ in range(4))


def apache_lines(rng, n):
    t = datetime.datetime(2005, 12, 4, 4, 47, 44)
    msgs = [
        lambda: "[notice] workerEnv.init() ok /etc/httpd/conf/workers2.properties",
        lambda: f"[error] mod_jk child workerEnv in error state {rng.choice([6, 7, 8])}",
        lambda: f"[notice] jk2_init() Found child {rng.randrange(1000, 32000)} in scoreboard slot {rng.randrange(6, 11)}",
        lambda: f"[error] [client {ip(rng)}] Directory index forbidden by rule: /var/www/html/",
        lambda: "[error] jk2_init() Can't find child {} in scoreboard".format(rng.randrange(1000, 32000)),
        lambda: f"[error] mod_jk child init 1 {rng.choice([-2, -1, 0])}",
        lambda: "[notice] Apache/2.0.49 (Fedora) configured -- resuming normal operations",
        lambda: f"[error] [client {ip(rng)}] File does not exist: /var/www/html/{rng.choice(['robots.txt', 'favicon.ico', 'scripts/..%255c../winnt/system32/cmd.exe'])}",
        lambda: "[notice] caught SIGTERM, shutting down",
        lambda: "[notice] suEXEC mechanism enabled (wrapper: /usr/sbin/suexec)",
        lambda: "[notice] Digest: generating secret for digest authentication ...",
        lambda: "[notice] Digest: done",
        lambda: "[notice] LDAP: Built with OpenLDAP LDAP SDK",
        lambda: "[error] env.createBean2(): Factory error creating channel.jni:jni ( channel.jni, jni)",
        lambda: "[error] config.update(): Can't create channel.jni:jni",
        lambda: f"[error] [client {ip(rng)}] script not found or unable to stat: /var/www/cgi-bin/{rng.choice(['awstats', 'awstats.pl', 'test-cgi'])}",
    ]
    weights = [14, 14, 16, 6, 4, 5, 1, 3, 1, 1, 1, 1, 1, 2, 2, 2]
    out = []
    for _ in range(n):
        t += datetime.timedelta(seconds=rng.randrange(0, 40))
        head = f"[{DAYS[t.weekday()]} {MONTHS[t.month - 1]} {t.day:02d} {t:%H:%M:%S} {t.year}]"
        out.append(head + " " + rng.choices(msgs, weights)[0]())
    return out


def linux_lines(rng, n):
    t = datetime.datetime(2005, 6, 14, 15, 16, 1)
    users = ["cyrus", "news", "root", "test", "guest", "admin"]
    msgs = [
        lambda: f"combo sshd(pam_unix)[{rng.randrange(1000, 32000)}]: authentication failure; logname= uid=0 euid=0 tty=NODEVssh ruser= rhost={ip(rng)}",
        lambda: f"combo sshd(pam_unix)[{rng.randrange(1000, 32000)}]: check pass; user unknown",
        lambda: f"combo su(pam_unix)[{rng.randrange(1000, 32000)}]: session opened for user {rng.choice(users)} by (uid=0)",
        lambda: f"combo su(pam_unix)[{rng.randrange(1000, 32000)}]: session closed for user {rng.choice(users)}",
        lambda: "combo logrotate: ALERT exited abnormally with [1]",
        lambda: f"combo ftpd[{rng.randrange(1000, 32000)}]: connection from {ip(rng)} () at {DAYS[t.weekday()]} {MONTHS[t.month - 1]} {t.day:2d} {t:%H:%M:%S} {t.year}",
        lambda: "combo kernel: Linux version 2.6.5-1.358 (bhcompile@bugs.build.redhat.com) (gcc version 3.3.3 20040412 (Red Hat Linux 3.3.3-7)) #1 Sat May 8 09:04:50 EDT 2004",
        lambda: "combo syslogd 1.4.1: restart.",
        lambda: "combo kernel: klogd 1.4.1, log source = /proc/kmsg started.",
        lambda: f"combo kernel: BIOS-e820: {rng.randrange(0, 16**8):016x} - {rng.randrange(0, 16**8):016x} (usable)",
        lambda: "combo cups: cupsd shutdown succeeded",
        lambda: "combo cups: cupsd startup succeeded",
        lambda: f"combo xinetd[{rng.randrange(1000, 32000)}]: START: ftp pid={rng.randrange(1000, 32000)} from={ip(rng)}",
        lambda: f"combo gpm[{rng.randrange(1000, 32000)}]: *** info [startup.c(95)]: ",
        lambda: f"combo udev[{rng.randrange(100, 999)}]: removing device node '/udev/vcsa{rng.randrange(1, 12)}'",
        lambda: f"combo kernel: Memory: {rng.randrange(100000, 200000)}k/{rng.randrange(200000, 300000)}k available",
        lambda: f"combo rpc.statd[{rng.randrange(1000, 32000)}]: Version 1.0.6 Starting",
        lambda: f"combo named[{rng.randrange(1000, 32000)}]: lame server resolving '{rng.choice(['example.com', 'in-addr.arpa', 'ns1.net'])}' (in '{rng.choice(['com', 'arpa', 'net'])}'?): {ip(rng)}#53",
    ]
    weights = [30, 6, 12, 12, 2, 10, 1, 1, 1, 3, 1, 1, 4, 1, 2, 1, 1, 5]
    out = []
    for _ in range(n):
        t += datetime.timedelta(seconds=rng.randrange(0, 600))
        head = f"{MONTHS[t.month - 1]} {t.day:2d} {t:%H:%M:%S}"
        out.append(head + " " + rng.choices(msgs, weights)[0]())
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default=str(pathlib.Path(__file__).resolve().parent.parent / "tests/data/loghub"))
    ap.add_argument("--seed", type=int, default=2005)
    args = ap.parse_args()
    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rng = random.Random(args.seed)
    (out / "Apache_2k.log").write_text("\n".join(apache_lines(rng, 2000)) + "\n")
    (out / "Linux_2k.log").write_text("\n".join(linux_lines(rng, 2000)) + "\n")


if __name__ == "__main__":
    main()
