"""Regenerates synthetic_matrix.txt.

The counts are SYNTHETIC: a horizontally-stretched Gaussian fall-off over the
centroids in qwerty.layout, scaled by rough English letter frequencies. They
stand in for a matrix learned from real typing logs.
"""
import math

ALPHABET = list("abcdefghijklmnopqrstuvwxyz") + [" ", ".", ","]
TOKENS = {"SPACE": " ", "PERIOD": ".", "COMMA": ","}
LETTER_FREQ = {
    "e": 12.7, "t": 9.1, "a": 8.2, "o": 7.5, "i": 7.0, "n": 6.7, "s": 6.3,
    "h": 6.1, "r": 6.0, "d": 4.3, "l": 4.0, "c": 2.8, "u": 2.8, "m": 2.4,
    "w": 2.4, "f": 2.2, "g": 2.0, "y": 2.0, "p": 1.9, "b": 1.5, "v": 1.0,
    "k": 0.8, "j": 0.2, "x": 0.2, "q": 0.1, "z": 0.1,
    " ": 18.0, ".": 1.0, ",": 1.0,
}
SIGMA_X, SIGMA_Y, SCALE = 0.85, 0.55, 40.0


def centroids(path="qwerty.layout"):
    out = {}
    for line in open(path):
        line = line.split("#", 1)[0].split()
        if len(line) != 5:
            continue
        ch = TOKENS.get(line[0], line[0])
        out[ch] = (float(line[1]), float(line[2]))
    return out


def main():
    pos = centroids()
    rows = []
    for i in ALPHABET:
        row = []
        for j in ALPHABET:
            if i == j:
                row.append(0)
                continue
            dx = pos[i][0] - pos[j][0]
            dy = pos[i][1] - pos[j][1]
            w = math.exp(-(dx * dx) / (SIGMA_X ** 2) - (dy * dy) / (SIGMA_Y ** 2))
            row.append(int(SCALE * LETTER_FREQ[i] * w))
        rows.append(row)
    with open("synthetic_matrix.txt", "w") as f:
        f.write("# SYNTHETIC substitution matrix (generated by gen_synthetic_matrix.py)\n")
        f.write("# rows: intended, columns: typed; order: abcdefghijklmnopqrstuvwxyz SPACE PERIOD COMMA\n")
        for row in rows:
            f.write(" ".join(str(v) for v in row) + "\n")


if __name__ == "__main__":
    main()
