"""Random SELFIES strings decoded by the reference `selfies` package.

Writes tests/data/selfies_corpus.json: for every string the atom-introducing
token positions (0-based, derivation order), element symbols, formal charges
and the bond list (a, b, order) with a < b, sorted.

    python3 tests/oracles/selfies_corpus.py
"""

import json
import pathlib
import random

import selfies as sf
from selfies.utils.smiles_utils import smiles_to_mol

ALPHABET = [
    "[C]", "[=C]", "[#C]", "[N]", "[=N]", "[#N]", "[O]", "[=O]", "[F]", "[Cl]",
    "[Br]", "[I]", "[S]", "[=S]", "[P]", "[B]", "[N+1]", "[O-1]", "[=N+1]",
    "[Branch1]", "[=Branch1]", "[#Branch1]",
    "[Ring1]", "[=Ring1]", "[#Ring1]",
]
NON_ATOM_SMILES = {"=", "#", "-", "(", ")", "%", "/", "\\", "."}

OUT = pathlib.Path(__file__).resolve().parents[1] / "data" / "selfies_corpus.json"


def decode(selfies_str):
    smiles, attribution = sf.decoder(selfies_str, attribute=True)
    if not smiles:
        return {"selfies": selfies_str, "positions": [], "elements": [], "charges": [], "bonds": []}
    mol = smiles_to_mol(smiles, attributable=False)
    atom_entries = [
        e for e in attribution
        if e.token not in NON_ATOM_SMILES and not e.token.isdigit()
    ]
    assert len(atom_entries) == len(mol), (selfies_str, smiles)
    positions = []
    for entry in atom_entries:
        introducing = [a.index for a in entry.attribution
                       if "Branch" not in a.token and "Ring" not in a.token]
        assert len(introducing) == 1, (selfies_str, entry)
        positions.append(introducing[0])
    order = sorted(range(len(mol)), key=lambda i: positions[i])
    rank = {old: new for new, old in enumerate(order)}
    atoms = mol.get_atoms()
    bonds = set()
    for i in range(len(mol)):
        for b in mol.get_out_dirbonds(i):
            a, c = sorted((rank[b.src], rank[b.dst]))
            bonds.add((a, c, int(b.order)))
    return {
        "selfies": selfies_str,
        "positions": [positions[i] for i in order],
        "elements": [atoms[i].element for i in order],
        "charges": [atoms[i].charge for i in order],
        "bonds": sorted(bonds),
    }


def main():
    rng = random.Random(20240917)
    corpus = [
        "[C][Branch1][C][O]",
        "[C][C][O]",
        "[C][=C][C][=C][C][=C][Ring1][=Branch1]",
        "[C][Branch1][C][F][Branch1][C][Cl][Br]",
        "[O][=C][O]",
    ]
    while len(corpus) < 240:
        length = rng.randint(1, 14)
        corpus.append("".join(rng.choice(ALPHABET) for _ in range(length)))
    records = [decode(s) for s in corpus]
    OUT.write_text(json.dumps({"generator": "selfies " + sf.__version__, "records": records},
                              indent=1) + "\n")
    print(f"wrote {len(records)} records to {OUT}")


if __name__ == "__main__":
    main()
