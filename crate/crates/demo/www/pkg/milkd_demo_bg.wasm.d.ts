/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_session_free: (a: number, b: number) => void;
export const exploreLabels: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
export const rocCurve: (a: number, b: number, c: number, d: number) => [number, number, number, number];
export const session_bagView: (a: number, b: number) => [number, number, number, number];
export const session_epoch: (a: number) => number;
export const session_new: (a: number, b: number, c: number, d: number, e: number, f: number, g: number) => [number, number, number];
export const session_step: (a: number, b: number) => [number, number, number, number];
export const session_testBagCount: (a: number) => number;
export const session_testScores: (a: number, b: number) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __wbindgen_start: () => void;
