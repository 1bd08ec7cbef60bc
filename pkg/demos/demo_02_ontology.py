"""
Cell Ontology queries
=====================

A small OBO file is parsed into a DAG with a precomputed ancestor closure.
Ancestor match treats two terms as compatible when one lies above the other.
"""

from convkg.obo import parse_obo_lines

OBO = """
format-version: 1.2

[Term]
id: CL:0000000
name: cell

[Term]
id: CL:0000542
name: lymphocyte
is_a: CL:0000000

[Term]
id: CL:0000084
name: T cell
synonym: "T lymphocyte" EXACT []
is_a: CL:0000542

[Term]
id: CL:0000236
name: B cell
is_a: CL:0000542

[Term]
id: CL:0000625
name: CD8-positive, alpha-beta T cell
is_a: CL:0000084
"""

dag = parse_obo_lines(OBO.splitlines())

print(sorted(dag.ancestors("CL:0000625")))
print(sorted(dag.descendants("CL:0000542")))

# %%
# Same path: T cell vs its CD8 child is a match, T cell vs B cell is not.
print(dag.on_same_path("CL:0000084", "CL:0000625"))
print(dag.on_same_path("CL:0000084", "CL:0000236"))

# %%
# Free text resolves by id, then name, then synonym after normalising case,
# whitespace and trailing punctuation.
for text in ["CL:0000236", "t  cell.", "T Lymphocyte", "plasma blob"]:
    print(repr(text), "->", dag.resolve_label(text))
