#!/usr/bin/env python3
"""Regenerates the bundled item banks in data/banks/.

Item texts are synthetic. Output is deterministic.

    python3 tools/gen_banks.py [out_dir]
"""
import json
import sys
from pathlib import Path


def choice(item_id, level, statement, options, correct):
    return {
        "item_id": item_id,
        "level": level,
        "kind": "multiple-answer",
        "statement": statement,
        "choice": {"options": options, "correct_index": correct},
    }


def numeric(item_id, level, statement, params, expression, tolerance=0.01):
    return {
        "item_id": item_id,
        "level": level,
        "kind": "open-answer",
        "statement": statement,
        "parameters": [
            dict({"name": n, "min": lo, "max": hi}, **({"granularity": g} if g else {}))
            for n, lo, hi, g in params
        ],
        "solution": {"expression": expression, "tolerance": tolerance},
    }


def fig1_demo():
    items = []
    topics = {
        1: ["unit of flow rate", "SI prefix for 10^3", "boiling point of water at 1 atm",
            "chemical symbol of sodium", "unit of pressure", "value of 2^5"],
        2: ["derivative of x^2", "integral of 1/x", "log10(1000)",
            "mean of 2, 4 and 9", "slope of y = 3x + 1", "sqrt(144)"],
        3: ["eigenvalues of [[2,0],[0,3]]", "order of Newton's method",
            "error order of the trapezoid rule", "condition for a stable explicit Euler step",
            "rank of the 3x3 identity", "Simpson rule weight pattern"],
    }
    answers = {
        1: [("m^3/s", "kg", "Pa", "J"), ("kilo", "mega", "milli", "centi"), ("100 C", "90 C", "110 C", "0 C"),
            ("Na", "S", "So", "N"), ("Pa", "N", "W", "m/s"), ("32", "10", "25", "64")],
        2: [("2x", "x", "x^2/2", "2"), ("ln|x|", "1/x^2", "x", "-1/x^2"), ("3", "2", "100", "30"),
            ("5", "4", "6", "15"), ("3", "1", "1/3", "4"), ("12", "14", "11", "72")],
        3: [("2 and 3", "0 and 5", "1 and 6", "2 and 0"), ("quadratic", "linear", "cubic", "superlinear only"),
            ("h^2", "h", "h^3", "h^4"), ("h*|lambda| <= 2", "h > 1", "always", "never"),
            ("3", "1", "0", "9"), ("1-4-1", "1-2-1", "1-1-1", "1-3-3-1")],
    }
    for level in (1, 2, 3):
        for j, topic in enumerate(topics[level]):
            opts = list(answers[level][j])
            correct = (j + level) % 4
            opts[0], opts[correct] = opts[correct], opts[0]
            items.append(choice(f"demo-L{level}-{j + 1:02d}", level, f"Choose the correct {topic}.", opts, correct))
    return {"bank_id": "fig1-demo", "num_levels": 3, "title": "Three-level demo bank", "version": "1", "items": items}


def dwtf_theory():
    stems = {
        1: [("primary purpose of screening", ["remove coarse solids", "remove nitrate", "disinfect"]),
            ("typical unit of turbidity", ["NTU", "mg/L", "pH units"]),
            ("coagulant commonly used in drinking water", ["aluminium sulphate", "sodium chloride", "ethanol"]),
            ("process that removes settleable solids", ["sedimentation", "aeration", "chlorination"]),
            ("meaning of BOD", ["biochemical oxygen demand", "basic organic density", "bulk oxygen dosage"]),
            ("main goal of disinfection", ["inactivate pathogens", "remove colour", "raise pH"]),
            ("parameter measured in mg O2/L", ["COD", "turbidity", "conductivity"]),
            ("stage that follows coagulation", ["flocculation", "screening", "sludge drying"]),
            ("common sand filter medium", ["silica sand", "activated alumina", "zeolite only"]),
            ("definition of hydraulic retention time", ["volume over flow rate", "flow over area", "area over volume"]),
            ("gas dissolved by aeration", ["oxygen", "chlorine", "ammonia"]),
            ("sludge from primary settling", ["primary sludge", "waste activated sludge", "digestate"]),
            ("pH of neutral water at 25 C", ["7", "5", "9"]),
            ("typical aim of grit removal", ["protect pumps from abrasion", "remove phosphorus", "kill bacteria"]),
            ("unit of surface overflow rate", ["m/h", "kg/m3", "1/s"]),
            ("role of a clarifier", ["separate solids from liquid", "heat the water", "add oxygen"]),
            ("chemical used for chlorination", ["sodium hypochlorite", "sodium sulphate", "calcium carbonate"]),
            ("what a flow equalisation tank smooths", ["flow and load peaks", "pH only", "temperature only"])],
        2: [("effect of doubling tank area on overflow rate", ["it halves", "it doubles", "it stays the same"]),
            ("particle settling regime described by Stokes law", ["discrete laminar settling", "zone settling", "compression"]),
            ("reason for rapid mixing in coagulation", ["disperse coagulant quickly", "grow large flocs", "settle flocs"]),
            ("velocity gradient G in flocculation is set by", ["power input and viscosity", "tank depth only", "pH"]),
            ("activated sludge F/M ratio compares", ["substrate load to biomass", "flow to area", "oxygen to nitrogen"]),
            ("nitrification converts", ["ammonium to nitrate", "nitrate to nitrogen gas", "phosphate to polyphosphate"]),
            ("denitrification requires", ["anoxic conditions", "high dissolved oxygen", "UV light"]),
            ("breakpoint chlorination targets", ["free chlorine residual", "maximum chloramine", "zero residual"]),
            ("CT concept multiplies", ["disinfectant concentration and contact time", "cost and time", "colour and turbidity"]),
            ("backwashing a rapid filter aims to", ["remove retained solids", "add coagulant", "raise temperature"]),
            ("sludge volume index indicates", ["settleability of sludge", "sludge age", "oxygen demand"]),
            ("sludge retention time controls", ["which organisms persist", "inflow rate", "screen spacing"]),
            ("plug flow reactor compared to CSTR at first order", ["needs smaller volume", "needs larger volume", "same volume"]),
            ("alkalinity matters in coagulation because", ["coagulants consume it", "it adds turbidity", "it is a pathogen"]),
            ("oxygen transfer rate rises with", ["larger deficit from saturation", "higher temperature always", "lower mixing"]),
            ("membrane flux is", ["permeate flow per membrane area", "pressure per area", "area per flow"]),
            ("enhanced biological phosphorus removal uses", ["anaerobic then aerobic zones", "only aerobic zones", "chlorination"]),
            ("weir loading limit protects against", ["solids carry-over", "pump cavitation", "corrosion"])],
        3: [("limiting design criterion for a secondary clarifier", ["solids flux", "BOD load", "chlorine demand"]),
            ("Monod kinetics saturate when", ["substrate far exceeds half-saturation constant", "biomass is zero", "pH is 7"]),
            ("minimum SRT for nitrification depends mainly on", ["nitrifier growth rate and temperature", "influent colour", "tank shape"]),
            ("effect of short-circuiting on a contact tank", ["reduces effective contact time", "increases CT", "no effect"]),
            ("dispersion number near zero indicates", ["plug flow behaviour", "complete mixing", "dead zones"]),
            ("why chloramines are used in distribution", ["more persistent residual", "stronger oxidant", "remove hardness"]),
            ("fouling control in MBRs relies on", ["air scouring and relaxation", "higher flux", "less aeration"]),
            ("anaerobic digester instability is flagged by", ["rising volatile fatty acids", "falling temperature alone", "lower gas pressure"]),
            ("the Ten State Standards are used to", ["bound design loadings", "price chemicals", "size pipes only"]),
            ("why step-feed aeration helps", ["spreads oxygen demand along the tank", "removes grit", "avoids sludge wasting"]),
            ("jar tests determine", ["optimal coagulant dose", "sludge age", "filter depth"]),
            ("rate-limiting step in anaerobic digestion of solids", ["hydrolysis", "methanogenesis always", "screening"]),
            ("log removal credit is assigned per", ["treatment barrier", "tank volume", "operator shift"]),
            ("effect of low temperature on settling", ["higher viscosity slows settling", "faster settling", "no effect"]),
            ("hindered settling analysis uses", ["batch settling column tests", "jar tests only", "BOD bottles"]),
            ("why alpha factor matters in aeration design", ["wastewater transfers oxygen less than clean water",
                                                             "clean water is harder to aerate", "it sets pipe size"]),
            ("struvite formation risk appears in", ["digester return lines", "screens", "chlorine contact tanks"]),
            ("recycle ratio in a clarifier mass balance sets", ["return sludge concentration trade-offs", "influent BOD",
                                                                "chlorine dose"])],
    }
    items = []
    for level in (1, 2, 3):
        for j, (stem, opts) in enumerate(stems[level]):
            correct = (j * 7 + level) % 3
            shuffled = list(opts)
            shuffled[0], shuffled[correct] = shuffled[correct], shuffled[0]
            items.append(choice(f"dwtf-L{level}-{j + 1:02d}", level, f"Select the {stem}.", shuffled, correct))
    return {"bank_id": "dwtf-theory", "num_levels": 3, "title": "Water treatment design, theory (synthetic)",
            "version": "1", "items": items}


def applied_computing():
    pi = "3.141592653589793"
    templates = {
        1: [("Compute {a} + {b}.", [("a", 1, 50, 1), ("b", 1, 50, 1)], "a + b"),
            ("Compute {a} * {b}.", [("a", 2, 12, 1), ("b", 2, 12, 1)], "a * b"),
            ("Convert {m} minutes to seconds.", [("m", 1, 90, 1)], "m * 60"),
            ("Mean of {a} and {b}.", [("a", 0, 20, 0.5), ("b", 0, 20, 0.5)], "(a + b) / 2"),
            ("What is {p}% of {x}?", [("p", 5, 95, 5), ("x", 10, 400, 10)], "p * x / 100"),
            ("Compute {a} - {b}.", [("a", 20, 80, 1), ("b", 1, 19, 1)], "a - b"),
            ("Perimeter of a {w} x {h} rectangle.", [("w", 1, 30, 1), ("h", 1, 30, 1)], "2 * (w + h)"),
            ("Convert {c} degrees Celsius to Kelvin.", [("c", -20, 120, 1)], "c + 273.15"),
            ("Compute {a} / {b}.", [("a", 10, 100, 1), ("b", 2, 10, 1)], "a / b"),
            ("Square of {a}.", [("a", 2, 40, 1)], "a ^ 2"),
            ("Convert {l} litres to cubic metres.", [("l", 100, 5000, 100)], "l / 1000"),
            ("Area of a {w} x {h} rectangle.", [("w", 1, 30, 1), ("h", 1, 30, 1)], "w * h")],
        2: [("Hypotenuse with legs {a} and {b}.", [("a", 1, 20, 1), ("b", 1, 20, 1)], "sqrt(a^2 + b^2)"),
            ("Area of a circle of radius {r}.", [("r", 1, 15, 0.5)], f"{pi} * r^2"),
            ("Slope through (0, {y1}) and ({x2}, {y2}).", [("y1", 0, 10, 1), ("x2", 1, 10, 1), ("y2", 11, 30, 1)],
             "(y2 - y1) / x2"),
            ("{p} invested at {r}% for {n} years, compounded yearly.",
             [("p", 100, 1000, 50), ("r", 1, 8, 0.5), ("n", 1, 10, 1)], "p * (1 + r / 100) ^ n"),
            ("Volume of a sphere of radius {r}.", [("r", 1, 10, 0.5)], f"4 / 3 * {pi} * r^3"),
            ("Distance from (0,0) to ({x}, {y}).", [("x", -10, 10, 1), ("y", -10, 10, 1)], "sqrt(x^2 + y^2)"),
            ("Root of {a} x + {b} = 0.", [("a", 1, 9, 1), ("b", -30, 30, 1)], "-b / a"),
            ("Reynolds number for v={v} m/s, D={d} m, nu=1e-6 m2/s.", [("v", 0.5, 3, 0.1), ("d", 0.05, 0.5, 0.05)],
             "v * d / 1e-6"),
            ("Average speed over {d} km in {t} h.", [("d", 10, 300, 10), ("t", 1, 6, 0.5)], "d / t"),
            ("Flow in a pipe of diameter {d} m at {v} m/s.", [("d", 0.1, 1, 0.05), ("v", 0.5, 3, 0.5)],
             f"{pi} * d^2 / 4 * v"),
            ("Weighted mean of {a} (weight 2) and {b} (weight 3).", [("a", 0, 10, 0.5), ("b", 0, 10, 0.5)],
             "(2 * a + 3 * b) / 5"),
            ("Cube root of {x}.", [("x", 8, 1000, 1)], "x ^ (1 / 3)")],
        3: [("Remaining amount of {a} after {t} h with k={k} 1/h.", [("a", 10, 100, 5), ("t", 1, 10, 1), ("k", 0.05, 0.5, 0.05)],
             "a * exp(-k * t)"),
            ("log2 of {x}.", [("x", 2, 1024, 1)], "log(x) / log(2)"),
            ("One Newton step for sqrt({a}) from x0={x}.", [("a", 2, 50, 1), ("x", 1, 8, 1)], "x - (x^2 - a) / (2 * x)"),
            ("Half-life for first-order rate k={k} 1/h.", [("k", 0.01, 1, 0.01)], "log(2) / k"),
            ("Trapezoid estimate of x^2 on [0, {b}] with one interval.", [("b", 1, 6, 0.5)], "b * (0 + b^2) / 2"),
            ("Midpoint estimate of exp(x) on [0, {b}] with one interval.", [("b", 0.5, 3, 0.25)], "b * exp(b / 2)"),
            ("Natural log of {x}.", [("x", 1.5, 200, 0.5)], "log(x)"),
            ("Time to reach {f} of the initial amount with k={k}.", [("f", 0.1, 0.9, 0.1), ("k", 0.1, 1, 0.1)],
             "-log(f) / k"),
            ("Horizontal component of a {f} N force at {a} rad.", [("f", 10, 100, 5), ("a", 0.1, 1.4, 0.1)], "f * cos(a)"),
            ("Vertical component of a {f} N force at {a} rad.", [("f", 10, 100, 5), ("a", 0.1, 1.4, 0.1)], "f * sin(a)"),
            ("Doubling time at {r}% growth per period.", [("r", 1, 20, 1)], "log(2) / log(1 + r / 100)"),
            ("Relative error of {x} against the true value {t}.", [("x", 90, 110, 0.5), ("t", 95, 105, 1)],
             "abs(x - t) / t")],
        4: [("Larger root of {a}x^2 + {b}x - {c} = 0.", [("a", 1, 5, 1), ("b", -10, 10, 1), ("c", 1, 20, 1)],
             "(-b + sqrt(b^2 + 4 * a * c)) / (2 * a)"),
            ("Sample variance of {x}, {y}, {z}.", [("x", 0, 10, 1), ("y", 0, 10, 1), ("z", 11, 20, 1)],
             "((x - (x+y+z)/3)^2 + (y - (x+y+z)/3)^2 + (z - (x+y+z)/3)^2) / 2"),
            ("Simpson estimate of x^3 on [0, {b}].", [("b", 1, 4, 0.5)], "b / 6 * (0 + 4 * (b / 2)^3 + b^3)"),
            ("Euler step for y' = -{k} y from y={y} with h={h}.", [("k", 0.5, 3, 0.5), ("y", 1, 10, 1), ("h", 0.05, 0.3, 0.05)],
             "y + h * (-k * y)"),
            ("Exact y({t}) for y' = -{k} y, y(0)={y}.", [("t", 0.5, 3, 0.5), ("k", 0.2, 2, 0.2), ("y", 1, 10, 1)],
             "y * exp(-k * t)"),
            ("Second Newton iterate for sqrt({a}) from x0={x}.", [("a", 2, 50, 1), ("x", 1, 8, 1)],
             "(x - (x^2 - a)/(2*x)) - ((x - (x^2 - a)/(2*x))^2 - a) / (2 * (x - (x^2 - a)/(2*x)))"),
            ("Polar radius of the point ({x}, {y}).", [("x", 1, 10, 1), ("y", 1, 10, 1)], "sqrt(x^2 + y^2)"),
            ("Determinant of [[{a}, {b}], [{c}, {d}]].", [("a", -5, 5, 1), ("b", -5, 5, 1), ("c", -5, 5, 1), ("d", -5, 5, 1)],
             "a * d - b * c"),
            ("Norm of the residual of x={x} for x^2 = {a}.", [("x", 1, 9, 0.5), ("a", 2, 80, 1)], "abs(x^2 - a)"),
            ("Pipe head loss: f={f}, L={l} m, D={d} m, v={v} m/s, g=9.81.",
             [("f", 0.01, 0.05, 0.005), ("l", 10, 500, 10), ("d", 0.1, 1, 0.1), ("v", 0.5, 3, 0.5)],
             "f * l / d * v^2 / (2 * 9.81)"),
            ("Logistic value 1/(1+exp(-{k}({x}-{m}))).", [("k", 0.5, 3, 0.5), ("x", 0, 10, 0.5), ("m", 2, 8, 1)],
             "1 / (1 + exp(-k * (x - m)))"),
            ("Geometric mean of {a}, {b} and {c}.", [("a", 1, 20, 1), ("b", 1, 20, 1), ("c", 1, 20, 1)],
             "(a * b * c) ^ (1 / 3)")],
    }
    items = []
    for level, rows in templates.items():
        for j, (statement, params, expr) in enumerate(rows):
            items.append(numeric(f"ac-L{level}-{j + 1:02d}", level, statement, params, expr))
    return {"bank_id": "applied-computing", "num_levels": 4, "title": "Applied computing numeric problems (synthetic)",
            "version": "1", "items": items}


def main():
    out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).resolve().parent.parent / "data" / "banks"
    out.mkdir(parents=True, exist_ok=True)
    for name, bank in (("fig1_demo", fig1_demo()), ("dwtf_theory", dwtf_theory()),
                       ("applied_computing", applied_computing())):
        (out / f"{name}.json").write_text(json.dumps(bank, indent=2, ensure_ascii=False) + "\n")


if __name__ == "__main__":
    main()
