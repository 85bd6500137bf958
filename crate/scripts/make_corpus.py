#!/usr/bin/env python3
"""Builds the annotated extraction corpus used by the evaluation tests.

Each document is written with inline annotations such as
``{{N:SPSS}} version {{V:21}}``. The script strips the markup, writes the
plain document (text or TEI) and records the byte offsets of every
annotation in gold.jsonl. Offsets are computed here, from the markup alone.

Usage: make_corpus.py OUT_DIR
"""

import json
import re
import sys
from pathlib import Path
from xml.sax.saxutils import escape

COMPONENTS = {"N": "software_name", "V": "version", "P": "publisher", "U": "url"}
MARK = re.compile(r"\{\{([NVPU]):(.+?)\}\}")

GAZETTEER = [
    ("SPSS", "IBM SPSS Statistics", "https://www.ibm.com/spss", "IBM"),
    ("Stata", "", "https://www.stata.com/", "StataCorp"),
    ("R", "", "https://www.r-project.org/", "R Foundation"),
    ("GraphPad Prism", "Prism", "https://www.graphpad.com/", "GraphPad Software"),
    ("ImageJ", "", "https://imagej.net/", ""),
    ("Fiji", "", "https://fiji.sc/", ""),
    ("QuPath", "", "https://qupath.github.io/", ""),
    ("NumPy", "", "https://numpy.org/", ""),
    ("SciPy", "", "https://scipy.org/", ""),
    ("scikit-learn", "sklearn", "https://scikit-learn.org/", ""),
    ("MATLAB", "", "https://www.mathworks.com/products/matlab.html", "MathWorks"),
    ("Python", "", "https://www.python.org/", "Python Software Foundation"),
    ("NVivo", "", "", "QSR International"),
    ("ATLAS.ti", "", "https://atlasti.com/", ""),
    ("Praat", "", "https://www.praat.org/", ""),
    ("ELAN", "", "", ""),
    ("CellProfiler", "", "https://cellprofiler.org/", ""),
    ("SAMtools", "", "https://github.com/samtools/samtools", ""),
    ("GATK", "Genome Analysis Toolkit", "https://gatk.broadinstitute.org/", "Broad Institute"),
    ("Cytoscape", "", "https://cytoscape.org/", ""),
    ("Gephi", "", "https://gephi.org/", ""),
    ("lme4", "", "https://github.com/lme4/lme4", ""),
    ("Seurat", "", "https://satijalab.org/seurat/", ""),
    ("FastQC", "", "", "Babraham Institute"),
]

# (doc_id, format, title, email, paragraphs, references)
DOCS = [
    ("d01", "txt", None, None, [
        "Participants completed the survey online. Responses were analysed in {{N:SPSS}} version {{V:25}} ({{P:IBM}}, Armonk, NY).",
        "Missing values were handled by listwise deletion.",
    ], []),
    ("d02", "txt", None, None, [
        "All mixed models were fitted in {{N:R}} {{V:4.2.1}} with the {{N:lme4}} package.",
        "Random intercepts were included for each school.",
    ], []),
    ("d03", "txt", None, None, [
        "Statistical tests were run with {{N:GraphPad Prism}} {{V:9.0}} from {{P:GraphPad Software}}.",
        "Significance was set at p below five percent.",
    ], []),
    ("d04", "txt", None, None, [
        "Nuclei were segmented in {{N:Fiji}} and quantified with {{N:CellProfiler}} (see {{U:https://cellprofiler.org/}}).",
        "The pipeline file is available on request.",
    ], []),
    ("d05", "txt", None, None, [
        "Interview transcripts were coded in {{N:NVivo}} {{V:12}} ({{P:QSR International}}). Two coders reached good agreement.",
        "Themes were discussed with the whole team.",
    ], []),
    ("d06", "txt", None, None, [
        "Acoustic measurements were taken in {{N:Praat}} and annotations were aligned in {{N:ELAN}}.",
        "Vowel formants were normalised per speaker.",
    ], []),
    ("d07", "txt", None, None, [
        "Reads were sorted and indexed with {{N:SAMtools}} {{V:1.17}} obtained from {{U:https://github.com/samtools/samtools}}.",
        "Variants were called with the {{N:Genome Analysis Toolkit}} from the {{P:Broad Institute}}.",
    ], []),
    ("d08", "txt", None, None, [
        "Our classifier was trained in {{N:Python}} {{V:3.10}} using {{N:scikit-learn}} and {{N:NumPy}}.",
        "Hyperparameters were tuned by grid search. Code lives at {{U:https://github.com/example-lab/soil-classifier}} and {{N:SciPy}} handled the signal filtering.",
    ], []),
    ("d09", "txt", None, None, [
        "Regression analyses used {{N:Stata}} {{V:17}} ({{P:StataCorp}}, College Station, TX).",
        "Robust standard errors were clustered by district.",
    ], []),
    ("d10", "txt", None, None, [
        "Protein interaction networks were drawn in {{N:Cytoscape}} and communities were explored in {{N:Gephi}} {{V:0.10}}.",
        "Hub proteins were ranked by degree.",
    ], []),
    ("d11", "txt", None, None, [
        "Quality control of the raw reads was done with {{N:FastQC}} from the {{P:Babraham Institute}}.",
        "Adapters were trimmed before alignment.",
    ], []),
    ("d12", "txt", None, None, [
        "Tissue sections were scored in {{N:QuPath}} {{V:0.4.3}} ({{U:https://qupath.github.io/}}) by a blinded pathologist.",
        "Scores were averaged across three sections.",
    ], []),
    ("d13", "tei", "Clustering single-cell profiles of the developing retina", "lena.ortiz@retina.example.org", [
        "Count matrices were processed with {{N:Seurat}} [1]. Clusters were annotated by marker genes.",
        "Trajectory analysis was carried out in {{N:R}} [2].",
    ], [
        ("b0", "Hao Y, et al. Integrated analysis of multimodal single-cell data. Cell. 2021."),
        ("b1", "R Core Team. R: A language and environment for statistical computing. 2023."),
    ]),
    ("d14", "tei", "Automated counting of root hairs", "m.keller@plants.example.org", [
        "Images were preprocessed in {{N:ImageJ}} [1] and root hairs were counted with a custom {{N:MATLAB}} script from {{P:MathWorks}}.",
        "The counting code is available at {{U:https://github.com/example-lab/roothair-counter}} together with the {{N:MATLAB}} {{V:2023}} project files.",
    ], [
        ("b0", "Abramoff MD, Magalhaes PJ, Ram SJ. Image processing with ImageJ. Biophotonics International. 2004."),
    ]),
    ("d15", "tei", "Qualitative analysis of museum visitor interviews", "a.njoroge@museums.example.org", [
        "Interviews were transcribed and coded with {{N:ATLAS.ti}} {{V:23}} [1].",
        "Codes were merged into broader categories in a second pass.",
    ], [
        ("b0", "ATLAS.ti Scientific Software Development GmbH. ATLAS.ti. https://atlasti.com/."),
    ]),
    ("d16", "txt", None, None, [
        "Seedlings were grown under long-day conditions for three weeks.",
        "Leaf area was measured by hand with a ruler and recorded in a notebook.",
    ], []),
    ("d17", "txt", None, None, [
        "We interviewed twelve teachers about their assessment practices.",
        "Notes were taken during each session and summarised afterwards.",
    ], []),
    ("d18", "tei", "A field survey of pollinator visits", "t.berg@ecology.example.org", [
        "Pollinator visits were recorded for ten minutes per plot.",
        "Each plot was visited twice a day over the season.",
    ], []),
    ("d19", "tei", "Historical trade routes of the Baltic", "k.lind@history.example.org", [
        "Archival letters from merchant houses were transcribed manually.",
        "The routes were reconstructed from port registers and ship logs.",
    ], []),
    ("d20", "tei", "Soil moisture under different mulches", "p.sato@agri.example.org", [
        "Moisture probes were installed at two depths in every bed.",
        "Readings were taken each morning before irrigation.",
    ], []),
]


def strip(marked, base, doc_id):
    """Returns the plain paragraph and its gold annotations.

    ``base`` is the byte offset of the paragraph in the document body.
    """
    out = b""
    gold = []
    pos = 0
    for m in MARK.finditer(marked):
        out += marked[pos:m.start()].encode()
        surface = m.group(2)
        start = base + len(out)
        out += surface.encode()
        gold.append({
            "doc_id": doc_id,
            "component": COMPONENTS[m.group(1)],
            "start_byte": start,
            "end_byte": start + len(surface.encode()),
            "surface": surface,
        })
        pos = m.end()
    out += marked[pos:].encode()
    return out.decode(), gold


def build(doc):
    doc_id, fmt, title, email, paragraphs, refs = doc
    # plain text: paragraphs separated by a blank line; TEI body: joined by "\n"
    sep = "\n\n" if fmt == "txt" else "\n"
    plain, gold, base = [], [], 0
    for marked in paragraphs:
        text, g = strip(marked, base, doc_id)
        plain.append(text)
        gold.extend(g)
        base += len(text.encode()) + len(sep.encode())
    if fmt == "txt":
        return sep.join(plain) + "\n", gold
    body = "\n".join(f"        <p>{escape(p)}</p>" for p in plain)
    bibl = "\n".join(
        f'          <biblStruct xml:id="{rid}"><note>{escape(raw)}</note></biblStruct>' for rid, raw in refs
    )
    tei = f"""<?xml version="1.0" encoding="UTF-8"?>
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
    <back>
      <div type="references">
        <listBibl>
{bibl}
        </listBibl>
      </div>
    </back>
  </text>
</TEI>
"""
    return tei, gold


def main():
    out = Path(sys.argv[1])
    (out / "docs").mkdir(parents=True, exist_ok=True)
    all_gold = []
    for doc in DOCS:
        text, gold = build(doc)
        ext = "txt" if doc[1] == "txt" else "tei.xml"
        (out / "docs" / f"{doc[0]}.{ext}").write_text(text, encoding="utf-8")
        all_gold.extend(gold)
    with open(out / "gold.jsonl", "w", encoding="utf-8") as f:
        for g in all_gold:
            f.write(json.dumps(g, ensure_ascii=False) + "\n")
    with open(out / "gazetteer.tsv", "w", encoding="utf-8") as f:
        f.write("name\taliases\tcanonical_url\tpublisher\n")
        for row in GAZETTEER:
            f.write("\t".join(row) + "\n")


if __name__ == "__main__":
    main()
