#!/usr/bin/env python3
"""Builds the demo repository served by `softlink demo`.

Writes a static OAI-PMH repository (25 records over three ListRecords
pages), the full texts they point at, a gazetteer, a catalog, mock origin
trees for the archive and repository metadata files.

Usage: make_demo.py OUT_DIR
"""

import os
import sys
from pathlib import Path
from xml.sax.saxutils import escape

BASE = "https://repo.example.org"

GAZETTEER = [
    ("SPSS", "IBM SPSS Statistics", "https://www.ibm.com/spss", "IBM"),
    ("Stata", "", "https://www.stata.com/", "StataCorp"),
    ("R", "", "https://www.r-project.org/", "R Foundation"),
    ("ImageJ", "", "https://imagej.net/", ""),
    ("QuPath", "", "", ""),
    ("Praat", "", "", ""),
    ("NVivo", "", "", "QSR International"),
    ("OpenSeg", "", "", ""),
    ("TreeCount", "", "", ""),
    ("PhonoAlign", "", "", ""),
    ("FieldNotes", "", "", "Field Methods Group"),
]

CATALOG = [
    ("SPSS", "https://www.ibm.com/spss", "IBM"),
    ("Stata", "https://www.stata.com/", "StataCorp"),
    ("R", "https://www.r-project.org/", "R Foundation"),
    ("ImageJ", "https://imagej.net/", ""),
    ("OpenSeg", "https://github.com/openseg-lab/openseg", ""),
    ("TreeCount", "https://github.com/forest-lab/treecount", ""),
]

OPENSEG = "https://github.com/openseg-lab/openseg"
TREECOUNT = "https://github.com/forest-lab/treecount"
PHONOALIGN = "https://github.com/phono-group/phonoalign"

# (format, title, creators, email, paragraphs)
PAPERS = [
    ("tei", "Segmenting nuclei in cleared tissue", ["Okafor, Ada"], "ada.okafor@cells.example.org", [
        f"Nuclei were segmented with OpenSeg version 2.1 ({OPENSEG}).",
        "Masks were checked by eye on a random subset.",
    ]),
    ("tei", "Tree crown counts from drone imagery", ["Virtanen, Eero"], "eero.virtanen@forest.example.org", [
        f"Crowns were detected using TreeCount 0.9 available at {TREECOUNT}.",
        "Plots were flown at noon to limit shadows.",
    ]),
    ("tei", "Vowel timing in bilingual children", ["Moreau, Lise"], "lise.moreau@speech.example.org", [
        "Recordings were annotated in Praat.",
        f"Forced alignment used the PhonoAlign tool ({PHONOALIGN}).",
    ]),
    ("txt", "Survey of commuting habits", ["Ng, Wei"], None, [
        "Responses were analysed in SPSS version 28 (IBM).",
        "Weights were applied to match census margins.",
    ]),
    ("tei", "Household income and school choice", ["Silva, Rui"], "rui.silva@econ.example.org", [
        "Models were estimated in Stata 18 (StataCorp).",
        "Standard errors were clustered at the district level.",
    ]),
    ("tei", "Mitochondrial shape under stress", ["Haddad, Omar"], "o.haddad@bio.example.org", [
        "Images were processed in ImageJ and objects were segmented with OpenSeg 2.1.",
        "Thresholds were fixed across all conditions.",
    ]),
    ("txt", "Growth curves of urban trees", ["Kowalski, Anna"], None, [
        "Stem counts came from TreeCount version 0.9.",
        "Growth models were fitted in R 4.3.2.",
    ]),
    ("tei", "Teacher perspectives on feedback", ["Dube, Thandi"], "t.dube@edu.example.org", [
        "Transcripts were coded in NVivo 14 (QSR International).",
        "Two researchers coded every interview.",
    ]),
    ("tei", "Cell migration in scratch assays", ["Lindqvist, Per"], "per.lindqvist@cells.example.org", [
        f"Wound edges were traced with openseg ({OPENSEG}).",
        "Closure rates were compared with a mixed model.",
    ]),
    ("txt", "Field methods for wetland birds", ["Ahmed, Sara"], None, [
        "Observations were logged with the FieldNotes app from the Field Methods Group.",
        "Point counts lasted ten minutes.",
    ]),
    ("tei", "Pathology scoring of tumour sections", ["Brennan, Liam"], "liam.brennan@path.example.org", [
        "Sections were scored in QuPath 0.5 by two pathologists.",
        "Disagreements were settled by consensus.",
    ]),
    ("tei", "Stress markers in speech", ["Rossi, Giulia"], "g.rossi@speech.example.org", [
        "Pitch was extracted in Praat 6.3.",
        f"Segment boundaries came from PhonoAlign 1.2 ({PHONOALIGN}).",
    ]),
    ("txt", "Regional wage dynamics", ["Tanaka, Yui"], None, [
        "Panel regressions were run in Stata 17.",
        "Inflation was taken from national accounts.",
    ]),
    ("tei", "Leaf area from smartphone photos", ["Osei, Kwame"], "kwame.osei@plants.example.org", [
        "Leaf outlines were measured in ImageJ 1.54.",
        "Each leaf was photographed on a white board.",
    ]),
    ("tei", "Canopy gaps after storms", ["Nilsen, Ingrid"], "ingrid.nilsen@forest.example.org", [
        f"Gap sizes were derived from TreeCount ({TREECOUNT}).",
        "Storm tracks came from the weather service.",
    ]),
    ("tei", "Attitudes to renewable energy", ["Costa, Marta"], "m.costa@soc.example.org", [
        "Scales were validated in SPSS 29.",
        "Item wording followed earlier surveys.",
    ]),
    ("txt", "Organoid size distributions", ["Yilmaz, Deniz"], None, [
        "Organoids were outlined with OpenSeg 2.2.",
        "Sizes were compared across passages.",
    ]),
    ("tei", "Prosody in read and spontaneous speech", ["Walsh, Niamh"], "niamh.walsh@speech.example.org", [
        "Utterances were aligned with PhonoAlign and checked in Praat.",
        "Speaking rate was computed per phrase.",
    ]),
    ("tei", "Mortality risk in older adults", ["Kim, Jun"], "jun.kim@health.example.org", [
        "Survival models were fitted in R version 4.3.",
        "Follow-up lasted ten years.",
    ]),
    ("tei", "Student engagement in online courses", ["Pereira, Ana"], "ana.pereira@edu.example.org", [
        "Open answers were coded in NVivo.",
        "Engagement was measured with weekly logs.",
    ]),
    ("tei", "Seasonal patterns of pollinator visits", ["Berg, Tove"], "tove.berg@eco.example.org", [
        "Visits were recorded for ten minutes per plot.",
        "Each plot was visited twice a day.",
    ]),
    ("txt", "Archival records of grain prices", ["Lind, Karl"], None, [
        "Prices were transcribed from merchant ledgers.",
        "Units were converted to modern measures.",
    ]),
    ("tei", "Soil moisture under mulches", ["Sato, Petra"], "petra.sato@agri.example.org", [
        "Probes were installed at two depths in every bed.",
        "Readings were taken before irrigation.",
    ]),
    ("tei", "Oral histories of river towns", ["Mensah, Efua"], "efua.mensah@hist.example.org", [
        "Interviews were transcribed by hand.",
        "Place names were checked against old maps.",
    ]),
    ("txt", "Noise exposure in open offices", ["Dahl, Emil"], None, [
        "Sound levels were logged every minute.",
        "Workers rated their comfort each afternoon.",
    ]),
]

ORIGINS = {
    OPENSEG: {
        "README.md": b"# OpenSeg\n\nNucleus and cell segmentation.\n",
        "LICENSE": b"MIT License\n",
        "openseg/__init__.py": b"__version__ = \"2.1\"\n",
        "openseg/segment.py": b"def segment(image):\n    return image > image.mean()\n",
        "bin/openseg": (b"#!/bin/sh\nexec python -m openseg \"$@\"\n", True),
        "codemeta.json": None,
    },
    TREECOUNT: {
        "README.md": b"# TreeCount\n\nCounts tree crowns in aerial images.\n",
        "treecount.R": b"count_crowns <- function(img) sum(img > 0.5)\n",
        "CITATION.cff": None,
    },
    PHONOALIGN: {
        "README.md": b"# PhonoAlign\n\nForced alignment of phone segments.\n",
        "align.py": b"def align(wav, text):\n    return []\n",
        "docs/usage.md": b"Run `align.py` on a wav file.\n",
    },
}

OPENSEG_CODEMETA = b"""{
  "@context": "https://doi.org/10.5063/schema/codemeta-2.0",
  "@type": "SoftwareSourceCode",
  "name": "OpenSeg",
  "description": "Nucleus and cell segmentation for fluorescence microscopy",
  "license": "https://spdx.org/licenses/MIT",
  "version": "2.1"
}
"""

TREECOUNT_CFF = b"""cff-version: 1.2.0
title: TreeCount
message: Please cite this software using these metadata.
version: 0.9.1
license: GPL-3.0-or-later
abstract: Counts tree crowns in aerial images
"""


def oai_record(n, paper):
    fmt, title, creators, _email, _paras = paper
    ext = "tei.xml" if fmt == "tei" else "txt"
    creators_xml = "".join(f"<dc:creator>{escape(c)}</dc:creator>" for c in creators)
    return f"""  <record>
   <header>
    <identifier>oai:repo.example.org:paper-{n:02d}</identifier>
    <datestamp>2024-03-{n:02d}</datestamp>
   </header>
   <metadata>
    <oai_dc:dc xmlns:oai_dc="http://www.openarchives.org/OAI/2.0/oai_dc/" xmlns:dc="http://purl.org/dc/elements/1.1/">
     <dc:title>{escape(title)}</dc:title>{creators_xml}
     <dc:identifier>{BASE}/pdf/paper-{n:02d}.pdf</dc:identifier>
     <dc:identifier>{BASE}/fulltext/paper-{n:02d}.{ext}</dc:identifier>
    </oai_dc:dc>
   </metadata>
  </record>
"""


def oai_page(records, token):
    return f"""<?xml version="1.0" encoding="UTF-8"?>
<OAI-PMH xmlns="http://www.openarchives.org/OAI/2.0/">
 <responseDate>2024-04-01T09:00:00Z</responseDate>
 <request verb="ListRecords" metadataPrefix="oai_dc">{BASE}/oai</request>
 <ListRecords>
{records}{token}
 </ListRecords>
</OAI-PMH>
"""


def tei(title, email, paragraphs):
    body = "\n".join(f"        <p>{escape(p)}</p>" for p in paragraphs)
    return f"""<?xml version="1.0" encoding="UTF-8"?>
<TEI xmlns="http://www.tei-c.org/ns/1.0">
  <teiHeader>
    <fileDesc>
      <titleStmt><title level="a" type="main">{escape(title)}</title></titleStmt>
      <sourceDesc><biblStruct><analytic>
        <author><persName><surname>Author</surname></persName><email>{escape(email)}</email></author>
      </analytic></biblStruct></sourceDesc>
    </fileDesc>
  </teiHeader>
  <text>
    <body>
      <div>
{body}
      </div>
    </body>
  </text>
</TEI>
"""


def write_origins(root):
    for url, files in ORIGINS.items():
        base = root / url.removeprefix("https://")
        for rel, content in files.items():
            path = base / rel
            path.parent.mkdir(parents=True, exist_ok=True)
            executable = False
            if content is None:
                content = OPENSEG_CODEMETA if rel == "codemeta.json" else TREECOUNT_CFF
            elif isinstance(content, tuple):
                content, executable = content
            path.write_bytes(content)
            mode = 0o755 if executable else 0o644
            os.chmod(path, mode)


def main():
    out = Path(sys.argv[1])
    (out / "repo" / "oai").mkdir(parents=True, exist_ok=True)
    (out / "repo" / "fulltext").mkdir(parents=True, exist_ok=True)

    records = [oai_record(i + 1, p) for i, p in enumerate(PAPERS)]
    pages = [(records[0:10], "page2"), (records[10:20], "page3"), (records[20:25], None)]
    names = ["first", "page2", "page3"]
    cursor = 0
    for (recs, token), name in zip(pages, names):
        if token:
            tok = f' <resumptionToken completeListSize="25" cursor="{cursor}">{token}</resumptionToken>'
        else:
            tok = f' <resumptionToken completeListSize="25" cursor="{cursor}"/>'
        (out / "repo" / "oai" / f"{name}.xml").write_text(oai_page("".join(recs), tok), encoding="utf-8")
        cursor += len(recs)

    for i, (fmt, title, _creators, email, paras) in enumerate(PAPERS):
        n = i + 1
        if fmt == "tei":
            (out / "repo" / "fulltext" / f"paper-{n:02d}.tei.xml").write_text(tei(title, email, paras), encoding="utf-8")
        else:
            (out / "repo" / "fulltext" / f"paper-{n:02d}.txt").write_text("\n\n".join(paras) + "\n", encoding="utf-8")

    with open(out / "gazetteer.tsv", "w", encoding="utf-8") as f:
        f.write("name\taliases\tcanonical_url\tpublisher\n")
        for row in GAZETTEER:
            f.write("\t".join(row) + "\n")
    with open(out / "catalog.tsv", "w", encoding="utf-8") as f:
        f.write("name\turl\tpublisher\n")
        for row in CATALOG:
            f.write("\t".join(row).rstrip("\t") + "\n")
    write_origins(out / "origins")


if __name__ == "__main__":
    main()
