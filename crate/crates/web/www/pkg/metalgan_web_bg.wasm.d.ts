/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_demo_free: (a: number, b: number) => void;
export const demo_colorize: (a: number, b: number) => [number, number, number, number];
export const demo_epoch: (a: number) => number;
export const demo_gridHeight: (a: number) => number;
export const demo_gridPixels: (a: number) => [number, number];
export const demo_gridWidth: (a: number) => number;
export const demo_new: (a: bigint) => [number, number, number];
export const demo_trainEpoch: (a: number) => [number, number, number];
export const inceptionScore: (a: number, b: number, c: number, d: number) => [number, number, number, number];
export const labToRgb: (a: number, b: number, c: number) => [number, number];
export const rgbToLab: (a: number, b: number, c: number) => [number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_start: () => void;
